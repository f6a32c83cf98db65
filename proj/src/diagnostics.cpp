#include "stratamatch/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include "stratamatch/random.hpp"
#include "stratamatch/sampler.hpp"

namespace stratamatch {

std::string_view to_string(Zone zone) {
  switch (zone) {
    case Zone::ok: return "ok";
    case Zone::yellow: return "yellow";
    case Zone::red: return "red";
  }
  return "unknown";
}

Zone classify_zone(std::size_t treat, std::size_t control, const IssueThresholds& thresholds) {
  IssueFlags flags = classify_stratum(treat, control, thresholds);
  if (flags.has(Issue::TooFewSamples) || flags.has(Issue::TooManySamples)) return Zone::red;
  if (flags.has(Issue::NotEnoughTreated) || flags.has(Issue::NotEnoughControl)) {
    return Zone::yellow;
  }
  return Zone::ok;
}

std::vector<SizeRatioPoint> size_ratio_data(const Strata& strata) {
  std::vector<SizeRatioPoint> out;
  out.reserve(strata.issue_table.size());
  for (const auto& row : strata.issue_table) {
    out.push_back({row.stratum, row.total, row.control_proportion,
                   classify_zone(row.treat, row.control, strata.thresholds)});
  }
  return out;
}

namespace {

std::vector<std::size_t> rows_of_stratum(const Strata& strata, int stratum) {
  auto labels = strata.strata();
  std::vector<std::size_t> rows;
  for (std::size_t r = 0; r < labels.size(); ++r) {
    if (labels[r] == stratum) rows.push_back(r);
  }
  if (rows.empty()) {
    throw Error(ErrorCode::UnknownStratum, "stratum " + std::to_string(stratum));
  }
  return rows;
}

}  // namespace

HistogramData histogram_from_scores(const Strata& strata, std::span<const double> propensity,
                                    int stratum, std::size_t n_bins) {
  if (n_bins < 1) throw Error(ErrorCode::InvalidArgument, "n_bins must be at least 1");
  if (propensity.size() != strata.analysis_set.n_rows()) {
    throw Error(ErrorCode::ScoreLengthMismatch, "propensity length does not match analysis set");
  }
  const auto rows = rows_of_stratum(strata, stratum);
  const Column& treat = require_binary_treatment(strata.analysis_set, strata.treat);

  double lo = propensity[rows.front()], hi = lo;
  for (auto r : rows) {
    lo = std::min(lo, propensity[r]);
    hi = std::max(hi, propensity[r]);
  }
  if (!(hi > lo)) hi = lo + std::max(1e-12, std::abs(lo) * 1e-12);

  HistogramData out;
  out.stratum = stratum;
  out.bin_edges.resize(n_bins + 1);
  const double width = (hi - lo) / static_cast<double>(n_bins);
  for (std::size_t i = 0; i < n_bins; ++i) out.bin_edges[i] = lo + static_cast<double>(i) * width;
  out.bin_edges[n_bins] = hi;
  out.treated_counts.assign(n_bins, 0);
  out.control_counts.assign(n_bins, 0);
  for (auto r : rows) {
    auto pos = std::upper_bound(out.bin_edges.begin(), out.bin_edges.end(), propensity[r]) -
               out.bin_edges.begin() - 1;
    auto bin = std::min(static_cast<std::size_t>(std::max<std::ptrdiff_t>(pos, 0)), n_bins - 1);
    (treat.value(r) != 0.0 ? out.treated_counts : out.control_counts)[bin] += 1;
  }
  return out;
}

HistogramData propensity_hist_data(const Strata& strata, const PropensityInput& propensity,
                                   int stratum, std::size_t n_bins) {
  // Validate the stratum before paying for a model fit.
  rows_of_stratum(strata, stratum);
  auto fit = fit_propensity(strata, propensity, false);
  return histogram_from_scores(strata, fit.scores, stratum, n_bins);
}

std::vector<FisherMillPoint> fisher_mill_data(const Strata& strata,
                                              const PropensityInput& propensity, int stratum,
                                              double jitter_prognosis, double jitter_propensity,
                                              std::uint64_t seed) {
  if (!strata.has_prognostic_scores()) {
    throw Error(ErrorCode::NoPrognosticScores,
                "Fisher-Mill plots need prognostic scores; manual strata have none");
  }
  if (jitter_prognosis < 0.0 || jitter_propensity < 0.0) {
    throw Error(ErrorCode::InvalidArgument, "jitter amplitudes must be non-negative");
  }
  const auto rows = rows_of_stratum(strata, stratum);
  auto fit = fit_propensity(strata, propensity, false);
  const Column& treat = require_binary_treatment(strata.analysis_set, strata.treat);

  Rng rng(seed);
  std::vector<FisherMillPoint> out;
  out.reserve(rows.size());
  for (auto r : rows) {
    FisherMillPoint p;
    p.row_id = strata.analysis_set.row_ids()[r];
    p.group = treat.value(r) != 0.0 ? Group::treated : Group::control;
    p.prognosis = strata.prognostic_scores[r];
    p.propensity = fit.scores[r];
    if (jitter_prognosis > 0.0) p.prognosis += rng.uniform(-jitter_prognosis, jitter_prognosis);
    if (jitter_propensity > 0.0) {
      p.propensity += rng.uniform(-jitter_propensity, jitter_propensity);
    }
    out.push_back(p);
  }
  return out;
}

std::vector<ResidualRow> residual_data(const FittedGlm& model, const DataFrame& df) {
  const auto fitted = predict(model, df);
  const auto response = residuals(model, df, ResidualKind::response);
  const auto pearson = residuals(model, df, ResidualKind::pearson);
  const auto deviance = residuals(model, df, ResidualKind::deviance);
  std::vector<ResidualRow> out(df.n_rows());
  for (std::size_t r = 0; r < df.n_rows(); ++r) {
    out[r] = {df.row_ids()[r], fitted[r], response[r], pearson[r], deviance[r]};
  }
  return out;
}

void write_csv(std::span<const SizeRatioPoint> points, std::ostream& out) {
  out << "stratum,total,control_proportion,zone\n";
  for (const auto& p : points) {
    out << p.stratum << ',' << p.total << ',' << format_number(p.control_proportion) << ','
        << to_string(p.zone) << '\n';
  }
}

void write_csv(const HistogramData& hist, std::ostream& out) {
  out << "stratum,bin,lower,upper,treated,control\n";
  for (std::size_t i = 0; i + 1 < hist.bin_edges.size(); ++i) {
    out << hist.stratum << ',' << i + 1 << ',' << format_number(hist.bin_edges[i]) << ','
        << format_number(hist.bin_edges[i + 1]) << ',' << hist.treated_counts[i] << ','
        << hist.control_counts[i] << '\n';
  }
}

void write_csv(std::span<const FisherMillPoint> points, std::ostream& out) {
  out << "row_id,group,propensity,prognosis\n";
  for (const auto& p : points) {
    out << p.row_id << ',' << (p.group == Group::treated ? "treated" : "control") << ','
        << format_number(p.propensity) << ',' << format_number(p.prognosis) << '\n';
  }
}

void write_csv(std::span<const ResidualRow> rows, std::ostream& out) {
  out << "row_id,fitted,response_residual,pearson_residual,deviance_residual\n";
  for (const auto& r : rows) {
    out << r.row_id << ',' << format_number(r.fitted) << ',' << format_number(r.response) << ','
        << format_number(r.pearson) << ',' << format_number(r.deviance) << '\n';
  }
}

// ---------------------------------------------------------------------------
// SVG

namespace {

constexpr double kWidth = 480.0;
constexpr double kHeight = 360.0;
constexpr double kLeft = 60.0;
constexpr double kRight = 20.0;
constexpr double kTop = 30.0;
constexpr double kBottom = 50.0;

std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

class Canvas {
 public:
  Canvas(double x0, double x1, double y0, double y1) : x0_(x0), x1_(x1), y0_(y0), y1_(y1) {
    if (!(x1_ > x0_)) x1_ = x0_ + 1.0;
    if (!(y1_ > y0_)) y1_ = y0_ + 1.0;
  }

  [[nodiscard]] double px(double x) const {
    return kLeft + (x - x0_) / (x1_ - x0_) * (kWidth - kLeft - kRight);
  }
  [[nodiscard]] double py(double y) const {
    return kHeight - kBottom - (y - y0_) / (y1_ - y0_) * (kHeight - kTop - kBottom);
  }

  void rect(double xa, double ya, double xb, double yb, const char* fill) {
    const double l = px(std::min(xa, xb)), r = px(std::max(xa, xb));
    const double t = py(std::max(ya, yb)), b = py(std::min(ya, yb));
    body_ << "<rect x=\"" << fixed(l) << "\" y=\"" << fixed(t) << "\" width=\"" << fixed(r - l)
          << "\" height=\"" << fixed(b - t) << "\" fill=\"" << fill << "\"/>\n";
  }
  void circle(double x, double y, const char* fill) {
    body_ << "<circle cx=\"" << fixed(px(x)) << "\" cy=\"" << fixed(py(y))
          << "\" r=\"3\" fill=\"" << fill << "\" fill-opacity=\"0.7\"/>\n";
  }
  void raw(const std::string& s) { body_ << s; }

  [[nodiscard]] std::string finish(const std::string& title, const std::string& xlabel,
                                   const std::string& ylabel) const {
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
       << kHeight << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n";
    os << "<rect x=\"0\" y=\"0\" width=\"" << kWidth << "\" height=\"" << kHeight
       << "\" fill=\"white\"/>\n";
    os << body_.str();
    const double l = kLeft, r = kWidth - kRight, t = kTop, b = kHeight - kBottom;
    os << "<rect x=\"" << fixed(l) << "\" y=\"" << fixed(t) << "\" width=\"" << fixed(r - l)
       << "\" height=\"" << fixed(b - t) << "\" fill=\"none\" stroke=\"black\"/>\n";
    os << "<text x=\"" << fixed(l) << "\" y=\"" << fixed(b + 15) << "\" font-size=\"10\">"
       << format_number(x0_, 4) << "</text>\n";
    os << "<text x=\"" << fixed(r) << "\" y=\"" << fixed(b + 15)
       << "\" font-size=\"10\" text-anchor=\"end\">" << format_number(x1_, 4) << "</text>\n";
    os << "<text x=\"" << fixed(l - 5) << "\" y=\"" << fixed(b)
       << "\" font-size=\"10\" text-anchor=\"end\">" << format_number(y0_, 4) << "</text>\n";
    os << "<text x=\"" << fixed(l - 5) << "\" y=\"" << fixed(t + 10)
       << "\" font-size=\"10\" text-anchor=\"end\">" << format_number(y1_, 4) << "</text>\n";
    os << "<text x=\"" << fixed(kWidth / 2) << "\" y=\"20\" font-size=\"14\" "
       << "text-anchor=\"middle\">" << title << "</text>\n";
    os << "<text x=\"" << fixed((l + r) / 2) << "\" y=\"" << fixed(kHeight - 12)
       << "\" font-size=\"12\" text-anchor=\"middle\">" << xlabel << "</text>\n";
    os << "<text x=\"15\" y=\"" << fixed((t + b) / 2) << "\" font-size=\"12\" "
       << "text-anchor=\"middle\" transform=\"rotate(-90 15 " << fixed((t + b) / 2) << ")\">"
       << ylabel << "</text>\n";
    os << "</svg>\n";
    return os.str();
  }

 private:
  double x0_, x1_, y0_, y1_;
  std::ostringstream body_;
};

std::string size_ratio_svg(const std::vector<SizeRatioPoint>& points,
                           const IssueThresholds& thresholds) {
  double max_total = static_cast<double>(thresholds.too_few) * 2.0;
  for (const auto& p : points) max_total = std::max(max_total, static_cast<double>(p.total));
  const double x1 = max_total * 1.1;
  Canvas c(0.0, x1, 0.0, 1.0);
  const double lo = 1.0 / (1.0 + thresholds.ratio);
  const double hi = thresholds.ratio / (1.0 + thresholds.ratio);
  const double few = static_cast<double>(thresholds.too_few);
  const double many = std::min(static_cast<double>(thresholds.too_many), x1);
  c.rect(few, hi, many, 1.0, "#fff3a0");
  c.rect(few, 0.0, many, lo, "#fff3a0");
  c.rect(0.0, 0.0, few, 1.0, "#f4a6a6");
  if (many < x1) c.rect(many, 0.0, x1, 1.0, "#f4a6a6");
  for (const auto& p : points) {
    c.circle(static_cast<double>(p.total), p.control_proportion, "black");
  }
  return c.finish("Size-Ratio Plot", "Stratum Size", "Fraction Control Observations");
}

std::string histogram_svg(const HistogramData& h) {
  std::size_t peak = 1;
  for (std::size_t i = 0; i < h.treated_counts.size(); ++i) {
    peak = std::max({peak, h.treated_counts[i], h.control_counts[i]});
  }
  const double top = static_cast<double>(peak);
  Canvas c(h.bin_edges.front(), h.bin_edges.back(), -top, top);
  for (std::size_t i = 0; i < h.treated_counts.size(); ++i) {
    const double a = h.bin_edges[i], b = h.bin_edges[i + 1];
    if (h.treated_counts[i]) c.rect(a, 0.0, b, static_cast<double>(h.treated_counts[i]), "#2b83ba");
    if (h.control_counts[i]) {
      c.rect(a, -static_cast<double>(h.control_counts[i]), b, 0.0, "#fdae61");
    }
  }
  c.raw("<line x1=\"" + fixed(c.px(h.bin_edges.front())) + "\" y1=\"" + fixed(c.py(0.0)) +
        "\" x2=\"" + fixed(c.px(h.bin_edges.back())) + "\" y2=\"" + fixed(c.py(0.0)) +
        "\" stroke=\"black\"/>\n");
  return c.finish("Propensity Scores, Stratum " + std::to_string(h.stratum),
                  "Propensity Score", "Count (treated up, control down)");
}

std::string fisher_mill_svg(const std::vector<FisherMillPoint>& points) {
  double x0 = 0.0, x1 = 1.0, y0 = 0.0, y1 = 1.0;
  if (!points.empty()) {
    x0 = x1 = points.front().propensity;
    y0 = y1 = points.front().prognosis;
    for (const auto& p : points) {
      x0 = std::min(x0, p.propensity);
      x1 = std::max(x1, p.propensity);
      y0 = std::min(y0, p.prognosis);
      y1 = std::max(y1, p.prognosis);
    }
  }
  Canvas c(x0, x1, y0, y1);
  for (const auto& p : points) {
    c.circle(p.propensity, p.prognosis, p.group == Group::treated ? "#2b83ba" : "#d7191c");
  }
  return c.finish("Fisher-Mill Plot", "Estimated Propensity Score",
                  "Estimated Prognostic Score");
}

}  // namespace

std::string render_svg(const PlotData& plot, const IssueThresholds& thresholds) {
  if (const auto* sr = std::get_if<std::vector<SizeRatioPoint>>(&plot)) {
    return size_ratio_svg(*sr, thresholds);
  }
  if (const auto* h = std::get_if<HistogramData>(&plot)) return histogram_svg(*h);
  return fisher_mill_svg(std::get<std::vector<FisherMillPoint>>(plot));
}

void render_svg(const PlotData& plot, const std::filesystem::path& path,
                const IssueThresholds& thresholds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << render_svg(plot, thresholds);
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

}  // namespace stratamatch
