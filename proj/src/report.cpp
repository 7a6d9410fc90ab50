#include "fetalsyn/report.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "fetalsyn/errors.hpp"
#include "json.hpp"

namespace fetalsyn {

Aggregate aggregate(std::span<const double> values) {
  Aggregate a;
  a.n = values.size();
  if (a.n == 0) return a;
  double sum = 0.0;
  for (double v : values) sum += v;
  a.mean = sum / static_cast<double>(a.n);
  if (a.n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - a.mean) * (v - a.mean);
    a.std = std::sqrt(ss / static_cast<double>(a.n - 1));
  }
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  a.min = sorted.front();
  a.max = sorted.back();
  const std::size_t mid = a.n / 2;
  a.median = a.n % 2 == 1 ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);
  return a;
}

double metric_value(const ScoreSet& s, int metric) {
  switch (metric) {
    case 0: return s.mse;
    case 1: return s.ssim;
    case 2: return s.corr;
    case 3: return s.mi;
    case 4: return s.self_defined;
  }
  throw ArgumentError("metric index out of range: " + std::to_string(metric));
}

std::vector<TagSummary> summarize(const std::vector<ScoreRow>& rows) {
  std::vector<std::string> tags;
  for (const auto& r : rows) {
    if (std::find(tags.begin(), tags.end(), r.tag) == tags.end()) tags.push_back(r.tag);
  }
  std::vector<TagSummary> out;
  for (const auto& tag : tags) {
    TagSummary s;
    s.tag = tag;
    for (int m = 0; m < 5; ++m) {
      std::vector<double> v;
      for (const auto& r : rows)
        if (r.tag == tag) v.push_back(metric_value(r.scores, m));
      s.metrics[m] = aggregate(v);
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::size_t ScoreReport::row_count() const {
  std::size_t n = 0;
  for (const auto& s : sections) n += s.rows.size();
  return n;
}

namespace {

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  std::string s(buf);
  // "-0.000" -> "0.000"
  if (s.find_first_not_of("-0.") == std::string::npos && s.front() == '-') s.erase(0, 1);
  return s;
}

std::string file_stem(const std::string& name) {
  std::string s = name;
  for (char& c : s) {
    const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.' || c == '+';
    if (!ok) c = '_';
  }
  return s.empty() ? std::string("section") : s;
}

}  // namespace

std::string format_mean_std(double mean, double std, int decimals) {
  return fixed(mean, decimals) + " ± " + fixed(std, decimals);
}

std::string rows_csv(const std::vector<ScoreRow>& rows) {
  std::ostringstream os;
  os << "case,tag,mse,ssim,corr,mi,self_defined\n";
  for (const auto& r : rows) {
    os << r.case_id << ',' << r.tag;
    for (int m = 0; m < 5; ++m) os << ',' << fixed(metric_value(r.scores, m), 6);
    os << '\n';
  }
  return os.str();
}

std::string report_json(const ScoreReport& report) {
  nlohmann::ordered_json root;
  root["sections"] = nlohmann::ordered_json::array();
  for (const auto& sec : report.sections) {
    nlohmann::ordered_json js;
    js["name"] = sec.name;
    js["rows"] = sec.rows.size();
    js["notes"] = sec.notes;
    nlohmann::ordered_json aggs = nlohmann::ordered_json::object();
    for (const auto& t : summarize(sec.rows)) {
      nlohmann::ordered_json jt;
      for (int m = 0; m < 5; ++m) {
        const Aggregate& a = t.metrics[m];
        jt[kMetricNames[m]] = {{"n", a.n},     {"mean", a.mean}, {"std", a.std},
                               {"min", a.min}, {"max", a.max},   {"median", a.median}};
      }
      aggs[t.tag] = jt;
    }
    js["aggregates"] = aggs;
    root["sections"].push_back(js);
  }
  return root.dump(2) + "\n";
}

std::string report_text(const ScoreReport& report) {
  std::ostringstream os;
  for (const auto& sec : report.sections) {
    os << "[" << sec.name << "] " << sec.rows.size() << " rows\n";
    for (const auto& note : sec.notes) os << "  note: " << note << '\n';
    for (const auto& t : summarize(sec.rows)) {
      os << "  " << t.tag << ":";
      for (int m = 0; m < 5; ++m) {
        os << ' ' << kMetricNames[m] << ' ' << format_mean_std(t.metrics[m].mean, t.metrics[m].std);
        if (m < 4) os << ',';
      }
      os << '\n';
    }
  }
  return os.str();
}

void write_report(const ScoreReport& report, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create output directory " + dir.string() + ": " + ec.message());
  const auto write = [](const std::filesystem::path& p, const std::string& text) {
    std::ofstream os(p, std::ios::binary);
    if (!os) throw DataError("cannot write " + p.string());
    os << text;
  };
  for (const auto& sec : report.sections) write(dir / (file_stem(sec.name) + ".csv"), rows_csv(sec.rows));
  write(dir / "report.json", report_json(report));
}

}  // namespace fetalsyn
