#include "vfl/harness/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "vfl/core/error.hpp"
#include "vfl/harness/config.hpp"

namespace vfl::harness {
namespace fs = std::filesystem;
namespace {

std::string num(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(digits);
  s << v;
  return s.str();
}

std::string xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"};

std::string stat_cells(const Stat& s) { return num(s.mean) + "," + num(s.std); }

std::vector<ResultRow> completed_finals(const std::vector<ResultRow>& rows) {
  std::vector<ResultRow> out;
  for (const auto& r : rows)
    if (r.kind == "final" && r.status == "ok") out.push_back(r);
  return out;
}

struct Accumulator {
  std::vector<double> f1, acc, pert, s_train, s_test, prec, rec;
  void add(const ResultRow& r) {
    f1.push_back(r.f1);
    acc.push_back(r.accuracy);
    pert.push_back(r.mean_perturbation);
    if (r.has_surrogate) {
      s_train.push_back(r.surrogate_train_acc);
      s_test.push_back(r.surrogate_test_acc);
    }
    if (r.has_defense_stats) {
      prec.push_back(r.defense_precision);
      rec.push_back(r.defense_recall);
    }
  }
  void fill(Aggregate& a) const {
    a.f1 = summarize(f1);
    a.accuracy = summarize(acc);
    a.mean_perturbation = summarize(pert);
    a.surrogate_train_acc = summarize(s_train);
    a.surrogate_test_acc = summarize(s_test);
    a.defense_precision = summarize(prec);
    a.defense_recall = summarize(rec);
  }
};

}  // namespace

Stat summarize(const std::vector<double>& values) {
  Stat s;
  s.n = values.size();
  if (values.empty()) return s;
  for (double v : values) s.mean += v;
  s.mean /= double(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / double(values.size() - 1));
  }
  return s;
}

const std::vector<std::string>& sweep_axes() {
  static const std::vector<std::string> axes = {"poison_fraction", "known_labels", "adversary_feature_height",
                                                "lambda", "method", "dae.k"};
  return axes;
}

bool is_numeric_axis(const std::string& axis) { return axis != "lambda" && axis != "method"; }

std::string axis_value(const ResultRow& row, const std::string& axis) {
  if (axis == "poison_fraction") return num(row.poison_fraction);
  if (axis == "known_labels") return std::to_string(row.known_labels);
  if (axis == "adversary_feature_height") return std::to_string(row.adversary_height);
  if (axis == "lambda") return num(row.lambda_gan) + ":" + num(row.lambda_r);
  if (axis == "method") return row.method;
  if (axis == "dae.k") return num(row.dae_k);
  throw ConfigError("cannot aggregate along '" + axis + "'");
}

std::vector<Aggregate> aggregate(const std::vector<ResultRow>& rows, const std::string& axis) {
  std::vector<std::string> series;
  std::map<std::string, std::vector<std::string>> values;
  std::map<std::pair<std::string, std::string>, Accumulator> groups;
  for (const auto& r : completed_finals(rows)) {
    const std::string v = axis_value(r, axis);
    if (std::find(series.begin(), series.end(), r.name) == series.end()) series.push_back(r.name);
    auto& vs = values[r.name];
    if (std::find(vs.begin(), vs.end(), v) == vs.end()) vs.push_back(v);
    groups[{r.name, v}].add(r);
  }
  std::vector<Aggregate> out;
  for (const auto& s : series) {
    auto vs = values[s];
    if (is_numeric_axis(axis))
      std::stable_sort(vs.begin(), vs.end(), [](const std::string& a, const std::string& b) {
        return parse_double(a, "axis") < parse_double(b, "axis");
      });
    for (std::size_t i = 0; i < vs.size(); ++i) {
      Aggregate a;
      a.series = s;
      a.value = vs[i];
      a.x = is_numeric_axis(axis) ? parse_double(vs[i], "axis") : double(i);
      groups[{s, vs[i]}].fill(a);
      out.push_back(a);
    }
  }
  return out;
}

void write_aggregate_csv(const fs::path& path, const std::string& axis, const std::vector<Aggregate>& table) {
  std::ofstream out(path);
  out << "# schema=" << kResultSchemaVersion << "\n"
      << "axis,series,value,runs,f1_mean,f1_std,accuracy_mean,accuracy_std,mean_perturbation_mean,"
         "mean_perturbation_std,surrogate_train_acc_mean,surrogate_train_acc_std,surrogate_test_acc_mean,"
         "surrogate_test_acc_std,defense_precision_mean,defense_precision_std,defense_recall_mean,"
         "defense_recall_std\n";
  for (const auto& a : table)
    out << csv_escape(axis) << ',' << csv_escape(a.series) << ',' << csv_escape(a.value) << ',' << a.f1.n << ','
        << stat_cells(a.f1) << ',' << stat_cells(a.accuracy) << ',' << stat_cells(a.mean_perturbation) << ','
        << stat_cells(a.surrogate_train_acc) << ',' << stat_cells(a.surrogate_test_acc) << ','
        << stat_cells(a.defense_precision) << ',' << stat_cells(a.defense_recall) << '\n';
  if (!out) throw DataError("cannot write " + path.string());
}

void write_line_chart(const fs::path& path, const std::string& axis, const std::vector<Aggregate>& table) {
  const double W = 640, H = 420, left = 70, right = 170, top = 30, bottom = 60;
  const double pw = W - left - right, ph = H - top - bottom;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& a : table) {
    xmin = std::min(xmin, a.x);
    xmax = std::max(xmax, a.x);
    ymin = std::min(ymin, a.f1.mean - a.f1.std);
    ymax = std::max(ymax, a.f1.mean + a.f1.std);
  }
  if (table.empty()) xmin = ymin = 0, xmax = ymax = 1;
  if (xmax - xmin < 1e-12) xmin -= 0.5, xmax += 0.5;
  const double pad = std::max(0.01, 0.08 * (ymax - ymin));
  ymin = std::max(0.0, ymin - pad);
  ymax = std::min(1.0, ymax + pad);
  if (ymax - ymin < 1e-6) ymin = std::max(0.0, ymax - 0.1);
  auto X = [&](double x) { return left + (x - xmin) / (xmax - xmin) * pw; };
  auto Y = [&](double y) { return top + (1.0 - (y - ymin) / (ymax - ymin)) * ph; };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"#333\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double y = ymin + (ymax - ymin) * i / 5.0;
    svg << "<line x1=\"" << left << "\" x2=\"" << left + pw << "\" y1=\"" << Y(y) << "\" y2=\"" << Y(y)
        << "\" stroke=\"#ddd\"/><text x=\"" << left - 6 << "\" y=\"" << Y(y) + 4
        << "\" text-anchor=\"end\">" << fixed(y, 3) << "</text>\n";
  }
  std::vector<std::pair<double, std::string>> ticks;
  for (const auto& a : table)
    if (std::none_of(ticks.begin(), ticks.end(), [&](const auto& t) { return t.first == a.x; }))
      ticks.emplace_back(a.x, a.value);
  for (const auto& [x, label] : ticks)
    svg << "<text x=\"" << X(x) << "\" y=\"" << top + ph + 18 << "\" text-anchor=\"middle\">" << xml(label)
        << "</text>\n";
  svg << "<text x=\"" << left + pw / 2 << "\" y=\"" << H - 15 << "\" text-anchor=\"middle\">" << xml(axis)
      << "</text>\n<text transform=\"translate(18," << top + ph / 2
      << ") rotate(-90)\" text-anchor=\"middle\">test F1 (mean, std)</text>\n";

  std::vector<std::string> series;
  for (const auto& a : table)
    if (std::find(series.begin(), series.end(), a.series) == series.end()) series.push_back(a.series);
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kPalette[s % std::size(kPalette)];
    std::string points;
    for (const auto& a : table) {
      if (a.series != series[s]) continue;
      points += num(X(a.x)) + "," + num(Y(a.f1.mean)) + " ";
      svg << "<line x1=\"" << X(a.x) << "\" x2=\"" << X(a.x) << "\" y1=\"" << Y(a.f1.mean - a.f1.std)
          << "\" y2=\"" << Y(a.f1.mean + a.f1.std) << "\" stroke=\"" << color << "\"/>\n"
          << "<circle cx=\"" << X(a.x) << "\" cy=\"" << Y(a.f1.mean) << "\" r=\"3\" fill=\"" << color
          << "\"/>\n";
    }
    svg << "<polyline fill=\"none\" stroke-width=\"2\" stroke=\"" << color << "\" points=\"" << points
        << "\"/>\n";
    const double ly = top + 14 + 18.0 * double(s);
    svg << "<line x1=\"" << left + pw + 12 << "\" x2=\"" << left + pw + 32 << "\" y1=\"" << ly << "\" y2=\""
        << ly << "\" stroke-width=\"2\" stroke=\"" << color << "\"/><text x=\"" << left + pw + 38
        << "\" y=\"" << ly + 4 << "\">" << xml(series[s].empty() ? "runs" : series[s]) << "</text>\n";
  }
  svg << "</svg>\n";
  std::ofstream out(path);
  out << svg.str();
  if (!out) throw DataError("cannot write " + path.string());
}

void write_bar_chart(const fs::path& path, const std::vector<Aggregate>& table) {
  const double bar = 24, gap = 10, left = 170, width = 380;
  const double H = 40 + double(table.size()) * (bar + gap);
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << left + width + 120 << "\" height=\"" << H
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (std::size_t i = 0; i < table.size(); ++i) {
    const auto& a = table[i];
    const double y = 20 + double(i) * (bar + gap);
    const std::string label = a.series.empty() ? a.value : a.series + " " + a.value;
    svg << "<text x=\"" << left - 8 << "\" y=\"" << y + bar * 0.65 << "\" text-anchor=\"end\">" << xml(label)
        << "</text>\n<rect x=\"" << left << "\" y=\"" << y << "\" width=\"" << width * a.f1.mean
        << "\" height=\"" << bar << "\" fill=\"" << kPalette[i % std::size(kPalette)] << "\"/>\n<text x=\""
        << left + width * a.f1.mean + 6 << "\" y=\"" << y + bar * 0.65 << "\">" << fixed(a.f1.mean) << " ± "
        << fixed(a.f1.std) << "</text>\n";
  }
  svg << "</svg>\n";
  std::ofstream out(path);
  out << svg.str();
  if (!out) throw DataError("cannot write " + path.string());
}

std::vector<fs::path> emit_report(const std::vector<ResultRow>& rows, const fs::path& dir,
                                  const ReportOptions& options) {
  if (rows.empty()) throw ValidationError("no result rows to report");
  fs::create_directories(dir);
  std::vector<fs::path> written;

  write_results(dir / "results.csv", rows);
  written.push_back(dir / "results.csv");

  // One summary line per (dataset, method, attack settings).
  std::vector<std::string> order;
  std::map<std::string, Accumulator> groups;
  std::map<std::string, ResultRow> exemplar;
  for (const auto& r : completed_finals(rows)) {
    const std::string key = r.name + "|" + r.dataset + "|" + r.method + "|" + num(r.poison_fraction) + "|" +
                            std::to_string(r.known_labels) + "|" + std::to_string(r.adversary_height) + "|" +
                            num(r.lambda_gan) + "|" + num(r.lambda_r) + "|" + num(r.dae_k);
    if (!groups.count(key)) {
      order.push_back(key);
      exemplar[key] = r;
    }
    groups[key].add(r);
  }
  {
    std::ofstream out(dir / "summary.csv");
    out << "# schema=" << kResultSchemaVersion << "\n"
        << "name,dataset,method,poison_fraction,known_labels,adversary_feature_height,lambda_gan,lambda_r,dae_k,"
           "runs,f1_mean,f1_std,accuracy_mean,accuracy_std,mean_perturbation_mean,defense_precision_mean,"
           "defense_recall_mean\n";
    for (const auto& key : order) {
      const ResultRow& r = exemplar[key];
      Aggregate a;
      groups[key].fill(a);
      out << csv_escape(r.name) << ',' << r.dataset << ',' << r.method << ',' << num(r.poison_fraction) << ','
          << r.known_labels << ',' << r.adversary_height << ',' << num(r.lambda_gan) << ',' << num(r.lambda_r)
          << ',' << num(r.dae_k) << ',' << a.f1.n << ',' << stat_cells(a.f1) << ',' << stat_cells(a.accuracy)
          << ',' << num(a.mean_perturbation.mean) << ',' << num(a.defense_precision.mean) << ','
          << num(a.defense_recall.mean) << '\n';
    }
    written.push_back(dir / "summary.csv");
  }

  std::vector<ResultRow> surrogate_rows;
  for (const auto& r : completed_finals(rows))
    if (r.has_surrogate) surrogate_rows.push_back(r);
  if (!surrogate_rows.empty()) {
    std::ofstream out(dir / "surrogate.csv");
    out << "# schema=" << kResultSchemaVersion << "\n"
        << "dataset,known_labels,train_acc,test_acc,seed\n";
    for (const auto& r : surrogate_rows)
      out << r.dataset << ',' << r.known_labels << ',' << num(r.surrogate_train_acc) << ','
          << num(r.surrogate_test_acc) << ',' << r.seed << '\n';
    written.push_back(dir / "surrogate.csv");
  }

  if (!options.axis.empty()) {
    const auto table = aggregate(rows, options.axis);
    const fs::path csv = dir / ("sweep_" + options.axis + ".csv");
    write_aggregate_csv(csv, options.axis, table);
    written.push_back(csv);
    if (options.plots) {
      const fs::path svg = dir / ("sweep_" + options.axis + ".svg");
      if (options.axis == "method") write_bar_chart(svg, table);
      else write_line_chart(svg, options.axis, table);
      written.push_back(svg);
    }
  }
  if (options.plots && options.axis != "method") {
    const auto methods = aggregate(rows, "method");
    if (!methods.empty()) {
      write_bar_chart(dir / "methods.svg", methods);
      written.push_back(dir / "methods.svg");
    }
  }
  return written;
}

}  // namespace vfl::harness
