/*
 * Copyright 2026 The koopvar Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 *
 */

#include "koopvar/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace koopvar {

namespace {

constexpr double kWidth = 760, kHeight = 500;
constexpr double kLeft = 80, kRight = 210, kTop = 50, kBottom = 60;

struct Point {
  double x, y, lo = NAN, hi = NAN;
};

struct Series {
  std::string label;
  std::string color;
  int marker;  // index into the marker cycle, one per bandwidth
  bool line;
  std::vector<Point> points;
};

struct LogAxis {
  double lo = 1, hi = 10;

  void fit(const std::vector<double>& values, double default_lo, double default_hi) {
    double a = INFINITY, b = -INFINITY;
    for (double v : values)
      if (v > 0 && std::isfinite(v)) {
        a = std::min(a, v);
        b = std::max(b, v);
      }
    if (!std::isfinite(a)) {
      a = default_lo;
      b = default_hi;
    }
    lo = std::pow(10.0, std::floor(std::log10(a)));
    hi = std::pow(10.0, std::ceil(std::log10(b)));
    if (hi <= lo) hi = lo * 10;
  }
  double map(double v, double p0, double p1) const {
    return p0 + (std::log10(v) - std::log10(lo)) / (std::log10(hi) - std::log10(lo)) * (p1 - p0);
  }
};

bool usable(double v) { return std::isfinite(v) && v > 0; }

std::string num(double v) {
  std::ostringstream s;
  s.precision(6);
  s << v;
  return s.str();
}

void marker(std::ostringstream& svg, int kind, double x, double y, const std::string& color) {
  switch (kind % 3) {
    case 0:
      svg << "<circle cx=\"" << num(x) << "\" cy=\"" << num(y) << "\" r=\"3.5\" fill=\"none\" stroke=\"" << color
          << "\"/>\n";
      break;
    case 1:
      svg << "<path d=\"M" << num(x - 3.5) << ' ' << num(y - 3.5) << " L" << num(x + 3.5) << ' ' << num(y + 3.5)
          << " M" << num(x - 3.5) << ' ' << num(y + 3.5) << " L" << num(x + 3.5) << ' ' << num(y - 3.5)
          << "\" stroke=\"" << color << "\"/>\n";
      break;
    default:
      svg << "<rect x=\"" << num(x - 3.5) << "\" y=\"" << num(y - 3.5)
          << "\" width=\"7\" height=\"7\" fill=\"none\" stroke=\"" << color << "\"/>\n";
  }
}

PlotKind detect(const std::vector<ResultRow>& rows) {
  for (const auto& r : rows) {
    if (r.experiment.rfind("estimation", 0) == 0) return PlotKind::estimation;
    if (r.experiment.rfind("prediction", 0) == 0) return PlotKind::prediction;
  }
  return PlotKind::unknown;
}

using CellKey = std::pair<double, long long>;

std::vector<Series> estimation_series(const std::vector<ResultRow>& rows) {
  std::map<CellKey, const ResultRow*> p90;
  std::map<CellKey, std::vector<double>> errors;
  std::map<CellKey, const ResultRow*> any;
  for (const auto& r : rows) {
    const CellKey key{r.sigma, r.m};
    if (r.experiment == "estimation_p90") p90[key] = &r;
    if (r.experiment == "estimation") {
      errors[key].push_back(r.error);
      any.emplace(key, &r);
    }
  }
  std::map<double, int> sigma_index;
  for (const auto& [key, row] : any) sigma_index.emplace(key.first, 0);
  for (const auto& [key, row] : p90) sigma_index.emplace(key.first, 0);
  int idx = 0;
  for (auto& [s, i] : sigma_index) i = idx++;

  std::vector<Series> out;
  for (const auto& [sigma, si] : sigma_index) {
    const std::string tag = " (sigma=" + format_double(sigma) + ")";
    Series exact{"exact variance" + tag, "#1f77b4", si, true, {}};
    Series coarse{"coarse variance" + tag, "#2ca02c", si, true, {}};
    Series iid{"i.i.d. variance" + tag, "#9467bd", si, true, {}};
    Series pct{"0.9-percentile" + tag, "#d62728", si, true, {}};
    std::map<long long, const ResultRow*> cells;
    for (const auto& [key, row] : any)
      if (key.first == sigma) cells[key.second] = row;
    for (const auto& [key, row] : p90)
      if (key.first == sigma) cells[key.second] = row;
    for (const auto& [m, row] : cells) {
      const double x = double(m);
      if (usable(row->bound_exact)) exact.points.push_back({x, row->bound_exact});
      if (usable(row->bound_coarse)) coarse.points.push_back({x, row->bound_coarse});
      if (usable(row->bound_iid)) iid.points.push_back({x, row->bound_iid});
      const auto it = p90.find({sigma, m});
      const double p = it != p90.end() ? it->second->error : percentile(errors[{sigma, m}], 0.9);
      if (usable(p)) pct.points.push_back({x, p});
    }
    for (auto* s : {&exact, &coarse, &iid, &pct})
      if (!s->points.empty()) out.push_back(std::move(*s));
  }
  return out;
}

std::vector<Series> prediction_series(const std::vector<ResultRow>& rows) {
  std::map<CellKey, std::vector<double>> errors;
  std::map<CellKey, double> bound, mean, sd;
  for (const auto& r : rows) {
    const CellKey key{r.sigma, r.m};
    if (r.experiment == "prediction") errors[key].push_back(r.error);
    if (r.experiment.rfind("prediction", 0) == 0 && r.experiment != "prediction_failed") bound[key] = r.bound_exact;
    if (r.experiment == "prediction_mean") mean[key] = r.error;
    if (r.experiment == "prediction_std") sd[key] = r.error;
  }
  std::map<double, int> sigma_index;
  for (const auto& [key, b] : bound) sigma_index.emplace(key.first, 0);
  int idx = 0;
  for (auto& [s, i] : sigma_index) i = idx++;

  std::vector<Series> out;
  for (const auto& [sigma, si] : sigma_index) {
    const std::string tag = " (sigma=" + format_double(sigma) + ")";
    Series b{"bound" + tag, "#1f77b4", si, true, {}};
    Series e{"error mean +- sd" + tag, "#d62728", si, false, {}};
    for (const auto& [key, value] : bound) {
      if (key.first != sigma) continue;
      const double x = double(key.second);
      if (usable(value)) b.points.push_back({x, value});
      double mu = NAN, s = 0;
      if (mean.contains(key)) {
        mu = mean[key];
        s = sd.contains(key) ? sd[key] : 0;
      } else if (!errors[key].empty()) {
        const auto& v = errors[key];
        mu = 0;
        for (double z : v) mu += z / double(v.size());
        for (double z : v) s += (z - mu) * (z - mu);
        s = v.size() > 1 ? std::sqrt(s / double(v.size() - 1)) : 0;
      }
      if (usable(mu)) e.points.push_back({x, mu, mu - s, mu + s});
    }
    for (auto* s : {&b, &e})
      if (!s->points.empty()) out.push_back(std::move(*s));
  }
  return out;
}

}  // namespace

std::string render_svg(const std::vector<ResultRow>& rows, const std::string& title, PlotKind* kind_out,
                       int* series_out) {
  const PlotKind kind = detect(rows);
  std::vector<Series> series;
  if (kind == PlotKind::estimation) series = estimation_series(rows);
  if (kind == PlotKind::prediction) series = prediction_series(rows);
  if (kind_out) *kind_out = kind;
  if (series_out) *series_out = static_cast<int>(series.size());

  std::vector<double> xs, ys;
  for (const auto& s : series)
    for (const auto& p : s.points) {
      xs.push_back(p.x);
      ys.push_back(p.y);
      if (usable(p.lo)) ys.push_back(p.lo);
      if (usable(p.hi)) ys.push_back(p.hi);
    }
  LogAxis ax, ay;
  ax.fit(xs, 10, 1e5);
  ay.fit(ys, 1e-4, 1);
  const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << num((x0 + x1) / 2) << "\" y=\"25\" text-anchor=\"middle\" font-size=\"14\">" << title
      << "</text>\n";
  svg << "<rect x=\"" << x0 << "\" y=\"" << y1 << "\" width=\"" << num(x1 - x0) << "\" height=\"" << num(y0 - y1)
      << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (double v = ax.lo; v <= ax.hi * 1.0001; v *= 10) {
    const double px = ax.map(v, x0, x1);
    svg << "<line x1=\"" << num(px) << "\" y1=\"" << y0 << "\" x2=\"" << num(px) << "\" y2=\"" << y1
        << "\" stroke=\"#dddddd\"/>\n";
    svg << "<text x=\"" << num(px) << "\" y=\"" << num(y0 + 16) << "\" text-anchor=\"middle\">1e"
        << std::lround(std::log10(v)) << "</text>\n";
  }
  for (double v = ay.lo; v <= ay.hi * 1.0001; v *= 10) {
    const double py = ay.map(v, y0, y1);
    svg << "<line x1=\"" << x0 << "\" y1=\"" << num(py) << "\" x2=\"" << x1 << "\" y2=\"" << num(py)
        << "\" stroke=\"#dddddd\"/>\n";
    svg << "<text x=\"" << num(x0 - 6) << "\" y=\"" << num(py + 4) << "\" text-anchor=\"end\">1e"
        << std::lround(std::log10(v)) << "</text>\n";
  }
  svg << "<text x=\"" << num((x0 + x1) / 2) << "\" y=\"" << num(kHeight - 15) << "\" text-anchor=\"middle\">m</text>\n";
  svg << "<text x=\"18\" y=\"" << num((y0 + y1) / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
      << num((y0 + y1) / 2) << ")\">error</text>\n";

  double ly = y1 + 8;
  for (const auto& s : series) {
    auto px = [&](const Point& p) { return ax.map(p.x, x0, x1); };
    auto py = [&](double v) { return ay.map(v, y0, y1); };
    if (s.line && s.points.size() > 1) {
      svg << "<polyline fill=\"none\" stroke=\"" << s.color << "\" points=\"";
      for (const auto& p : s.points) svg << num(px(p)) << ',' << num(py(p.y)) << ' ';
      svg << "\"/>\n";
    }
    for (const auto& p : s.points) {
      if (usable(p.lo) || usable(p.hi)) {
        const double top = usable(p.hi) ? py(p.hi) : py(p.y);
        const double bottom = usable(p.lo) ? py(p.lo) : y0;
        svg << "<line x1=\"" << num(px(p)) << "\" y1=\"" << num(top) << "\" x2=\"" << num(px(p)) << "\" y2=\""
            << num(bottom) << "\" stroke=\"" << s.color << "\"/>\n";
      }
      marker(svg, s.marker, px(p), py(p.y), s.color);
    }
    marker(svg, s.marker, x1 + 16, ly, s.color);
    svg << "<text x=\"" << num(x1 + 26) << "\" y=\"" << num(ly + 4) << "\">" << s.label << "</text>\n";
    ly += 16;
  }
  svg << "</svg>\n";
  return svg.str();
}

PlotOutput emit_plot(const std::filesystem::path& csv, const std::filesystem::path& out_dir) {
  const auto rows = read_csv(csv);
  PlotKind kind;
  int series;
  const std::string svg = render_svg(rows, csv.stem().string(), &kind, &series);
  std::filesystem::create_directories(out_dir);
  const auto path = out_dir / (csv.stem().string() + ".svg");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << svg;
  return {path, kind, series};
}

std::vector<PlotOutput> emit_plots(const std::vector<std::filesystem::path>& csvs, const std::filesystem::path& out_dir) {
  std::vector<PlotOutput> out;
  for (const auto& c : csvs) out.push_back(emit_plot(c, out_dir));
  return out;
}

}  // namespace koopvar
