#include "condensor/indicator.hpp"

#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <charconv>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <tuple>

#include "condensor/error.hpp"

namespace condensor {

std::string_view decision_name(Decision d) {
  return d == Decision::distill_further ? "DISTILL_FURTHER" : "SHARE_RANDOM_SUBSET";
}

double pearson_r(std::span<const std::pair<double, double>> points) {
  if (points.size() < 2) throw DataError("degenerate correlation input: need at least 2 points");
  const auto n = static_cast<double>(points.size());
  double mx = 0, my = 0;
  for (auto [x, y] : points) mx += x / n, my += y / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (auto [x, y] : points) {
    sxy += (x - mx) * (y - my);
    sxx += (x - mx) * (x - mx);
    syy += (y - my) * (y - my);
  }
  if (sxx == 0 || syy == 0) throw DataError("degenerate correlation input: zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

Decision sharing_decision(double acc_distilled_50, double acc_random_50) {
  return acc_distilled_50 > acc_random_50 ? Decision::distill_further : Decision::share_random_subset;
}

double welch_one_sided_p(std::span<const double> distilled, std::span<const double> random) {
  if (distilled.size() < 2 || random.size() < 2) throw DataError("welch test: need at least 2 reps per arm");
  auto moments = [](std::span<const double> v) {
    const auto n = static_cast<double>(v.size());
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double ss = 0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::pair{m, ss / (n - 1)};
  };
  const auto [ma, va] = moments(distilled);
  const auto [mb, vb] = moments(random);
  const double na = static_cast<double>(distilled.size()), nb = static_cast<double>(random.size());
  const double se2 = va / na + vb / nb;
  if (se2 == 0) return ma > mb ? 0.0 : 1.0;
  const double t = (ma - mb) / std::sqrt(se2);
  const double df = se2 * se2 / ((va / na) * (va / na) / (na - 1) + (vb / nb) * (vb / nb) / (nb - 1));
  return boost::math::cdf(boost::math::complement(boost::math::students_t(df), t));
}

std::vector<IndicatorRecord> records_from_results(const std::vector<ResultRow>& rows, const std::string& random_method) {
  // (dataset, ipc, method) -> rep accuracies, ordered by rep
  std::map<std::tuple<std::string, int, std::string>, std::map<int, double>> groups;
  for (const auto& r : rows) groups[{r.dataset, r.ipc, r.method}][r.rep] = r.accuracy;
  auto values = [](const std::map<int, double>& m) {
    std::vector<double> v;
    for (const auto& [rep, a] : m) v.push_back(a);
    return v;
  };
  auto mean = [](const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); };
  std::vector<IndicatorRecord> out;
  for (const auto& [key, reps] : groups) {
    const auto& [dataset, ipc, method] = key;
    if (method == random_method) continue;
    auto it = groups.find({dataset, ipc, random_method});
    if (it == groups.end()) continue;
    IndicatorRecord rec;
    rec.dataset = dataset;
    rec.ipc = ipc;
    rec.method = method;
    rec.reps_distilled = values(reps);
    rec.reps_random = values(it->second);
    rec.accuracy_distilled = mean(rec.reps_distilled);
    rec.accuracy_random = mean(rec.reps_random);
    out.push_back(std::move(rec));
  }
  return out;
}

const MethodSeries* CorrelationReport::find(std::string_view method) const {
  for (const auto& s : series)
    if (s.method == method) return &s;
  return nullptr;
}

const DatasetDecision* CorrelationReport::decision_for(std::string_view dataset, std::string_view method) const {
  for (const auto& d : decisions)
    if (d.dataset == dataset && d.method == method) return &d;
  return nullptr;
}

namespace {

DatasetDecision decide(const IndicatorRecord& r, const std::string& label, const ReportOptions& opts) {
  DatasetDecision d{r.dataset, label, r.accuracy_distilled, r.accuracy_random,
                    sharing_decision(r.accuracy_distilled, r.accuracy_random), std::nullopt};
  if (opts.welch) {
    d.welch_p = welch_one_sided_p(r.reps_distilled, r.reps_random);
    if (*d.welch_p >= opts.welch_alpha) d.decision = Decision::share_random_subset;
  }
  return d;
}

}  // namespace

CorrelationReport correlation_report(const std::vector<IndicatorRecord>& records, const ReportOptions& opts) {
  for (const auto& r : records)
    if (r.accuracy_random < 0 || r.accuracy_random > 1 || r.accuracy_distilled < 0 || r.accuracy_distilled > 1)
      throw DataError("indicator: accuracies must be fractions in [0, 1] (dataset " + r.dataset + ")");
  CorrelationReport rep;
  const std::set<int> wanted(opts.correlation_ipcs.begin(), opts.correlation_ipcs.end());
  std::map<std::string, MethodSeries> by_method;
  std::set<std::string> datasets;
  std::set<int> ipcs;
  for (const auto& r : records) {
    if (!wanted.empty() && !wanted.count(r.ipc)) continue;
    auto& s = by_method[r.method];
    s.method = r.method;
    s.points.push_back(r);
    datasets.insert(r.dataset);
    ipcs.insert(r.ipc);
  }
  for (auto& [name, s] : by_method) {
    std::vector<std::pair<double, double>> pts;
    for (const auto& p : s.points) pts.emplace_back(p.accuracy_random, p.accuracy_distilled);
    try {
      s.r = pearson_r(pts);
    } catch (const DataError& e) {
      s.error = e.what();
    }
    rep.series.push_back(std::move(s));
  }
  std::ostringstream label;
  label << datasets.size() << " dataset(s) x ipc {";
  bool first = true;
  for (int i : ipcs) {
    label << (first ? "" : ",") << i;
    first = false;
  }
  label << "}";
  rep.point_set = label.str();

  std::map<std::string, std::vector<const IndicatorRecord*>> at_ipc;
  for (const auto& r : records)
    if (r.ipc == opts.decision_ipc) at_ipc[r.dataset].push_back(&r);
  for (const auto& [dataset, recs] : at_ipc) {
    const IndicatorRecord* best = nullptr;
    for (const auto* r : recs) {
      rep.decisions.push_back(decide(*r, r->method, opts));
      if (!best || r->accuracy_distilled > best->accuracy_distilled) best = r;
    }
    rep.decisions.push_back(decide(*best, "best", opts));
  }
  return rep;
}

namespace {

std::string num(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string report_csv(const CorrelationReport& report) {
  std::ostringstream os;
  os << "record,method,dataset,ipc,accuracy_random,accuracy_distilled,pearson_r,decision,welch_p,note\n";
  for (const auto& s : report.series) {
    for (const auto& p : s.points)
      os << "point," << s.method << "," << p.dataset << "," << p.ipc << "," << num(p.accuracy_random) << ","
         << num(p.accuracy_distilled) << ",,,,\n";
    os << "correlation," << s.method << ",,,,," << (s.r ? num(*s.r) : "") << ",,,"
       << (s.error.empty() ? "points: " + report.point_set : "error: " + s.error) << "\n";
  }
  for (const auto& d : report.decisions)
    os << "decision," << d.method << "," << d.dataset << ",," << num(d.accuracy_random) << ","
       << num(d.accuracy_distilled) << ",," << decision_name(d.decision) << "," << (d.welch_p ? num(*d.welch_p) : "")
       << ",\n";
  return os.str();
}

std::string report_svg(const CorrelationReport& report) {
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
  const int size = 420, margin = 50, plot = size - 2 * margin;
  auto px = [&](double v) { return margin + v * plot; };
  auto py = [&](double v) { return size - margin - v * plot; };
  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size << "\" viewBox=\"0 0 "
     << size << " " << size << "\">\n"
     << "<rect x=\"0\" y=\"0\" width=\"" << size << "\" height=\"" << size << "\" fill=\"white\"/>\n"
     << "<line x1=\"" << margin << "\" y1=\"" << py(0) << "\" x2=\"" << px(1) << "\" y2=\"" << py(0)
     << "\" stroke=\"black\"/>\n"
     << "<line x1=\"" << margin << "\" y1=\"" << py(0) << "\" x2=\"" << margin << "\" y2=\"" << py(1)
     << "\" stroke=\"black\"/>\n"
     << "<line x1=\"" << px(0) << "\" y1=\"" << py(0) << "\" x2=\"" << px(1) << "\" y2=\"" << py(1)
     << "\" stroke=\"#bbbbbb\" stroke-dasharray=\"4 4\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double v = t / 4.0;
    os << "<text x=\"" << px(v) << "\" y=\"" << py(0) + 16 << "\" font-size=\"10\" text-anchor=\"middle\">" << num(v)
       << "</text>\n"
       << "<text x=\"" << margin - 6 << "\" y=\"" << py(v) + 3 << "\" font-size=\"10\" text-anchor=\"end\">" << num(v)
       << "</text>\n";
  }
  os << "<text x=\"" << size / 2 << "\" y=\"" << size - 12 << "\" font-size=\"12\" text-anchor=\"middle\">"
     << "random selection accuracy</text>\n"
     << "<text x=\"14\" y=\"" << size / 2 << "\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
     << size / 2 << ")\">distilled accuracy</text>\n"
     << "<text x=\"" << size / 2 << "\" y=\"20\" font-size=\"11\" text-anchor=\"middle\">" << xml_escape(report.point_set)
     << "</text>\n";
  for (std::size_t k = 0; k < report.series.size(); ++k) {
    const auto& s = report.series[k];
    const char* color = colors[k % 6];
    os << "<g id=\"series-" << xml_escape(s.method) << "\" fill=\"" << color << "\">\n";
    for (const auto& p : s.points)
      os << "<circle cx=\"" << px(p.accuracy_random) << "\" cy=\"" << py(p.accuracy_distilled) << "\" r=\"4\"><title>"
         << xml_escape(p.dataset) << " ipc " << p.ipc << "</title></circle>\n";
    os << "</g>\n";
    const double ly = margin + 14.0 * static_cast<double>(k);
    os << "<circle cx=\"" << margin + 10 << "\" cy=\"" << ly << "\" r=\"4\" fill=\"" << color << "\"/>\n"
       << "<text x=\"" << margin + 18 << "\" y=\"" << ly + 4 << "\" font-size=\"11\">" << xml_escape(s.method) << " "
       << (s.r ? "r = " + num(std::round(*s.r * 1e4) / 1e4) : xml_escape(s.error)) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace condensor
