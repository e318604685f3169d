#include "otwb/trace.hpp"

#include "otwb/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace otwb {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s, std::size_t line, const char* field) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::out_of_range&) {
    // stod rejects subnormals and overflow; fall back to strtod.
    return std::strtod(s.c_str(), nullptr);
  } catch (const std::exception&) {
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    throw ParseError("trace line " + std::to_string(line) + ": bad " + field + " '" + s + "'");
  }
}

long parse_long(const std::string& s, std::size_t line, const char* field) {
  long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ParseError("trace line " + std::to_string(line) + ": bad " + field + " '" + s + "'");
  }
  return v;
}

}  // namespace

std::string trace_to_csv(const std::vector<TraceRow>& rows) {
  std::ostringstream out;
  out << kTraceHeader << '\n' << std::setprecision(17);
  for (const auto& r : rows) {
    out << r.iter << ',' << r.tau << ',' << r.sigma << ',' << r.beta << ',' << r.theta << ','
        << r.inner_iters << ',' << r.gap_raw << ',' << r.gap_rounded << ',' << r.primal_value
        << ',' << r.elapsed_s << '\n';
  }
  return out.str();
}

std::vector<TraceRow> trace_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("trace: empty input");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kTraceHeader) throw ParseError("trace: unexpected header '" + line + "'");
  std::vector<TraceRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != 10) {
      throw ParseError("trace line " + std::to_string(lineno) + ": expected 10 fields, got " +
                       std::to_string(cells.size()));
    }
    TraceRow r;
    r.iter = parse_long(cells[0], lineno, "iter");
    r.tau = parse_double(cells[1], lineno, "tau");
    r.sigma = parse_double(cells[2], lineno, "sigma");
    r.beta = parse_double(cells[3], lineno, "beta");
    r.theta = parse_double(cells[4], lineno, "theta");
    r.inner_iters = parse_long(cells[5], lineno, "inner_iters");
    r.gap_raw = parse_double(cells[6], lineno, "gap_raw");
    r.gap_rounded = parse_double(cells[7], lineno, "gap_rounded");
    r.primal_value = parse_double(cells[8], lineno, "primal_value");
    r.elapsed_s = parse_double(cells[9], lineno, "elapsed_s");
    rows.push_back(r);
  }
  return rows;
}

void write_trace(const std::vector<TraceRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << trace_to_csv(rows);
}

std::vector<TraceRow> read_trace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return trace_from_csv(buf.str());
}

double fitted_loglog_slope(const std::vector<TraceRow>& rows) {
  std::vector<std::pair<double, double>> pts;
  for (const auto& r : rows) {
    if (r.iter > 0 && r.gap_rounded > 0.0 && std::isfinite(r.gap_rounded)) {
      pts.emplace_back(std::log(static_cast<double>(r.iter)), std::log(r.gap_rounded));
    }
  }
  if (pts.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  double mx = 0, my = 0;
  for (const auto& [x, y] : pts) {
    mx += x;
    my += y;
  }
  mx /= static_cast<double>(pts.size());
  my /= static_cast<double>(pts.size());
  double sxy = 0, sxx = 0;
  for (const auto& [x, y] : pts) {
    sxy += (x - mx) * (y - my);
    sxx += (x - mx) * (x - mx);
  }
  if (sxx == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sxy / sxx;
}

std::string trace_to_svg(const std::vector<TraceRow>& rows, const std::string& title) {
  constexpr double W = 640, H = 420, left = 70, right = 20, top = 40, bottom = 50;
  struct Series {
    const char* name;
    const char* color;
    std::vector<std::pair<double, double>> pts;
  };
  Series rounded{"gap (rounded)", "#1f77b4", {}};
  Series raw{"gap (raw)", "#d62728", {}};
  for (const auto& r : rows) {
    if (r.iter <= 0) continue;
    const double x = std::log10(static_cast<double>(r.iter));
    if (r.gap_rounded > 0 && std::isfinite(r.gap_rounded)) rounded.pts.emplace_back(x, std::log10(r.gap_rounded));
    if (r.gap_raw > 0 && std::isfinite(r.gap_raw)) raw.pts.emplace_back(x, std::log10(r.gap_raw));
  }
  double x0 = 0, x1 = 1, y0 = -1, y1 = 0;
  bool any = false;
  for (const Series* s : {&rounded, &raw}) {
    for (const auto& [x, y] : s->pts) {
      if (!any) {
        x0 = x1 = x;
        y0 = y1 = y;
        any = true;
      }
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  }
  x0 = std::floor(x0);
  x1 = std::max(std::ceil(x1), x0 + 1);
  y0 = std::floor(y0);
  y1 = std::max(std::ceil(y1), y0 + 1);
  auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * (W - left - right); };
  auto py = [&](double y) { return H - bottom - (y - y0) / (y1 - y0) * (H - top - bottom); };

  std::ostringstream out;
  out << std::fixed << std::setprecision(2);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" viewBox=\"0 0 " << W << ' ' << H << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  std::string esc;
  for (char ch : title) {
    if (ch == '<') esc += "&lt;";
    else if (ch == '>') esc += "&gt;";
    else if (ch == '&') esc += "&amp;";
    else esc += ch;
  }
  out << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"15\">" << esc << "</text>\n";
  out << "<g stroke=\"#ccc\" stroke-width=\"1\">\n";
  for (double d = x0; d <= x1 + 1e-9; d += 1) {
    out << "<line x1=\"" << px(d) << "\" y1=\"" << py(y0) << "\" x2=\"" << px(d) << "\" y2=\""
        << py(y1) << "\"/>\n";
  }
  for (double d = y0; d <= y1 + 1e-9; d += 1) {
    out << "<line x1=\"" << px(x0) << "\" y1=\"" << py(d) << "\" x2=\"" << px(x1) << "\" y2=\""
        << py(d) << "\"/>\n";
  }
  out << "</g>\n<g font-family=\"sans-serif\" font-size=\"11\">\n";
  for (double d = x0; d <= x1 + 1e-9; d += 1) {
    out << "<text x=\"" << px(d) << "\" y=\"" << py(y0) + 16
        << "\" text-anchor=\"middle\">1e" << static_cast<int>(d) << "</text>\n";
  }
  for (double d = y0; d <= y1 + 1e-9; d += 1) {
    out << "<text x=\"" << px(x0) - 6 << "\" y=\"" << py(d) + 4 << "\" text-anchor=\"end\">1e"
        << static_cast<int>(d) << "</text>\n";
  }
  const double slope = fitted_loglog_slope(rows);
  if (std::isfinite(slope)) {
    out << "<text x=\"" << left + 8 << "\" y=\"" << top + 14 << "\">fitted slope " << slope
        << "</text>\n";
  }
  out << "<text x=\"" << (left + W - right) / 2 << "\" y=\"" << H - 12
      << "\" text-anchor=\"middle\">iteration</text>\n";
  out << "<text x=\"16\" y=\"" << (top + H - bottom) / 2 << "\" transform=\"rotate(-90 16 "
      << (top + H - bottom) / 2 << ")\" text-anchor=\"middle\">duality gap</text>\n</g>\n";
  double legend_y = top + 10;
  for (const Series* s : {&rounded, &raw}) {
    if (s->pts.empty()) continue;
    out << "<polyline fill=\"none\" stroke=\"" << s->color << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& [x, y] : s->pts) out << px(x) << ',' << py(y) << ' ';
    out << "\"/>\n";
    out << "<text x=\"" << W - right - 120 << "\" y=\"" << legend_y
        << "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"" << s->color << "\">" << s->name
        << "</text>\n";
    legend_y += 16;
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace otwb
