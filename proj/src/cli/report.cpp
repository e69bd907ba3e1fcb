#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "commands.hpp"
#include "ecrl/errors.hpp"
#include "ecrl/train_eval.hpp"

namespace fs = std::filesystem;

namespace ecrl::cli {

namespace {

struct LogRow {
  double epoch, l_tsg_aug, l_tsg_orig, l_cons, l_overall, val;
};

std::vector<LogRow> parse_log(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open log " + path.string());
  std::string line;
  std::size_t lineno = 0;
  std::vector<LogRow> rows;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (lineno == 1) {
      if (line != train::kLogHeader) throw InputError(path.string() + ": line 1: unexpected header '" + line + "'");
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::istringstream ss(line);
    for (std::string f; std::getline(ss, f, ',');) fields.push_back(f);
    if (fields.size() != 6 || line.back() == ',') {
      throw InputError(path.string() + ": line " + std::to_string(lineno) + ": expected 6 fields");
    }
    double v[6];
    for (std::size_t k = 0; k < 6; ++k) {
      const std::string& field = fields[k];
      const char* b = field.data();
      const char* e = b + field.size();
      if (field == "nan") {
        v[k] = std::numeric_limits<double>::quiet_NaN();
      } else if (auto r = std::from_chars(b, e, v[k]); r.ec != std::errc() || r.ptr != e || field.empty()) {
        throw InputError(path.string() + ": line " + std::to_string(lineno) + ": bad number '" + field + "'");
      }
    }
    if (!rows.empty() && v[0] != rows.back().epoch + 1) {
      throw InputError(path.string() + ": line " + std::to_string(lineno) + ": epochs out of sequence");
    }
    rows.push_back({v[0], v[1], v[2], v[3], v[4], v[5]});
  }
  if (lineno == 0) throw InputError(path.string() + ": empty log");
  if (rows.empty()) throw InputError(path.string() + ": line " + std::to_string(lineno) + ": no epoch rows");
  return rows;
}

struct Series {
  std::string name;
  std::string color;
  std::vector<double> y;
};

// Minimal line chart: linear axes, one polyline per series, legend.
void write_chart(const fs::path& path, const std::string& title, const std::string& ylabel,
                 const std::vector<double>& x, const std::vector<Series>& series) {
  constexpr double W = 640, H = 400, L = 70, R = 150, Tp = 40, B = 50;
  double ymin = std::numeric_limits<double>::infinity(), ymax = -ymin;
  for (const auto& s : series)
    for (double v : s.y)
      if (std::isfinite(v)) ymin = std::min(ymin, v), ymax = std::max(ymax, v);
  if (!std::isfinite(ymin)) ymin = 0, ymax = 1;
  if (ymax - ymin < 1e-12) ymin -= 0.5, ymax += 0.5;
  const double xmin = x.front(), xmax = std::max(x.back(), x.front() + 1);
  const auto px = [&](double v) { return L + (v - xmin) / (xmax - xmin) * (W - L - R); };
  const auto py = [&](double v) { return H - B - (v - ymin) / (ymax - ymin) * (H - Tp - B); };

  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  char buf[256];
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << title << "</text>\n";
  std::snprintf(buf, sizeof buf, "<path d=\"M%g %gV%gH%g\" stroke=\"black\" fill=\"none\"/>\n", L, Tp, H - B, W - R);
  out << buf;
  for (int i = 0; i <= 4; ++i) {
    const double yv = ymin + (ymax - ymin) * i / 4.0, xv = xmin + (xmax - xmin) * i / 4.0;
    std::snprintf(buf, sizeof buf, "<text x=\"%g\" y=\"%g\" text-anchor=\"end\">%.3g</text>\n", L - 6, py(yv) + 4, yv);
    out << buf;
    std::snprintf(buf, sizeof buf, "<text x=\"%g\" y=\"%g\" text-anchor=\"middle\">%.0f</text>\n", px(xv), H - B + 18, xv);
    out << buf;
  }
  out << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\">epoch</text>\n";
  out << "<text x=\"16\" y=\"" << (Tp + H - B) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
      << (Tp + H - B) / 2 << ")\">" << ylabel << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    std::string pts;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (!std::isfinite(s.y[i])) continue;
      std::snprintf(buf, sizeof buf, "%.2f,%.2f ", px(x[i]), py(s.y[i]));
      pts += buf;
    }
    out << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\" points=\"" << pts << "\"/>\n";
    const double ly = Tp + 10 + 18.0 * static_cast<double>(k);
    std::snprintf(buf, sizeof buf, "<path d=\"M%g %gh20\" stroke=\"%s\" stroke-width=\"2\"/>", W - R + 10, ly,
                  s.color.c_str());
    out << buf << "<text x=\"" << W - R + 36 << "\" y=\"" << ly + 4 << "\">" << s.name << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace

int report(const ReportArgs& a) {
  const auto rows = parse_log(a.log);
  fs::create_directories(a.out);
  std::vector<double> x;
  Series aug{"l_tsg_aug", "#1f77b4", {}}, orig{"l_tsg_orig", "#ff7f0e", {}}, cons{"l_cons", "#2ca02c", {}},
      total{"l_overall", "#d62728", {}}, val{"val R@1,IoU=0.5", "#9467bd", {}};
  for (const auto& r : rows) {
    x.push_back(r.epoch);
    aug.y.push_back(r.l_tsg_aug);
    orig.y.push_back(r.l_tsg_orig);
    cons.y.push_back(r.l_cons);
    total.y.push_back(r.l_overall);
    val.y.push_back(r.val);
  }
  write_chart(a.out / "loss_curve.svg", "Training loss", "loss", x, {total, aug, orig, cons});
  write_chart(a.out / "recall_curve.svg", "Validation recall", "R@1, IoU=0.5", x, {val});

  // First occurrence of the maximum, the same rule best.ckpt follows.
  std::size_t best = rows.size();
  for (std::size_t i = 0; i < rows.size(); ++i)
    if (!std::isnan(rows[i].val) && (best == rows.size() || rows[i].val > rows[best].val)) best = i;
  std::size_t min_loss = 0;
  for (std::size_t i = 1; i < rows.size(); ++i)
    if (rows[i].l_overall < rows[min_loss].l_overall) min_loss = i;

  std::ostringstream s;
  const auto& last = rows.back();
  s << "epochs: " << rows.size() << "\n";
  s << "final epoch: " << last.epoch << " l_overall=" << last.l_overall << " l_tsg_aug=" << last.l_tsg_aug
    << " l_tsg_orig=" << last.l_tsg_orig << " l_cons=" << last.l_cons << "\n";
  s << "first l_overall: " << rows.front().l_overall << ", lowest " << rows[min_loss].l_overall << " at epoch "
    << rows[min_loss].epoch << "\n";
  if (best < rows.size()) {
    s << "final val R@1,IoU=0.5: " << last.val << "\n";
    s << "best val R@1,IoU=0.5: " << rows[best].val << " at epoch " << rows[best].epoch << "\n";
  } else {
    s << "no validation metrics in log\n";
  }
  std::ofstream out(a.out / "summary.txt");
  if (!out) throw IoError("cannot write " + (a.out / "summary.txt").string());
  out << s.str();
  std::fputs(s.str().c_str(), stdout);
  return kOk;
}

}  // namespace ecrl::cli
