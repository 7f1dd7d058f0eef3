#include "nowcast/verification_metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "nowcast/errors.hpp"
#include "nowcast/losses.hpp"

namespace nowcast::metrics {

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    tn += o.tn;
    fn += o.fn;
    return *this;
}

ConfusionCounts confusion(std::span<const double> target, std::span<const double> pred, double threshold) {
    if (target.size() != pred.size())
        throw Error(ErrorKind::ShapeMismatch, "confusion: " + std::to_string(target.size()) + " vs " +
                                                  std::to_string(pred.size()) + " pixels");
    ConfusionCounts c;
    c.threshold = threshold;
    for (std::size_t i = 0; i < target.size(); ++i) {
        const bool obs = target[i] >= threshold;
        const bool fc = pred[i] >= threshold;
        if (obs && fc) ++c.tp;
        else if (!obs && fc) ++c.fp;
        else if (obs) ++c.fn;
        else ++c.tn;
    }
    return c;
}

ConfusionCounts confusion(const Grid& target, const Grid& pred, double threshold) {
    if (!target.same_shape(pred)) throw Error(ErrorKind::ShapeMismatch, "confusion: grids differ in shape");
    return confusion(target.values, pred.values, threshold);
}

std::optional<double> csi(const ConfusionCounts& c) {
    const auto d = c.tp + c.fn + c.fp;
    if (d == 0) return std::nullopt;
    return static_cast<double>(c.tp) / static_cast<double>(d);
}

std::optional<double> hss(const ConfusionCounts& c) {
    const double tp = static_cast<double>(c.tp), fp = static_cast<double>(c.fp);
    const double tn = static_cast<double>(c.tn), fn = static_cast<double>(c.fn);
    const double d = (tp + fn) * (fn + tn) + (tp + fp) * (fp + tn);
    if (d == 0.0) return std::nullopt;
    return 2.0 * (tp * tn - fp * fn) / d;
}

std::optional<double> pod(const ConfusionCounts& c) {
    if (c.tp + c.fn == 0) return std::nullopt;
    return static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
}

std::optional<double> success_ratio(const ConfusionCounts& c) {
    if (c.tp + c.fp == 0) return std::nullopt;
    return static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
}

std::optional<double> frequency_bias(const ConfusionCounts& c) {
    if (c.tp + c.fn == 0) return std::nullopt;
    return static_cast<double>(c.tp + c.fp) / static_cast<double>(c.tp + c.fn);
}

std::array<double, kHours> wmae_metric(std::span<const Grid> targets, std::span<const Grid> preds, double th) {
    if (targets.size() != kHours || preds.size() != kHours)
        throw Error(ErrorKind::ShapeMismatch, "wmae_metric needs three hourly maps on each side");
    std::array<double, kHours> out{};
    for (int t = 0; t < kHours; ++t) {
        if (!targets[t].same_shape(preds[t])) throw Error(ErrorKind::ShapeMismatch, "wmae_metric: shape mismatch");
        out[t] = loss::wmae(targets[t].values, preds[t].values, th);
    }
    return out;
}

DiagramRow diagram_row(const ConfusionCounts& c) {
    DiagramRow r;
    r.threshold = c.threshold;
    r.pod = pod(c);
    r.sr = success_ratio(c);
    r.csi = csi(c);
    r.bias = frequency_bias(c);
    return r;
}

std::vector<DiagramRow> performance_diagram_rows(std::span<const ConfusionCounts> counts) {
    if (counts.empty()) throw Error(ErrorKind::EmptySplit, "performance diagram needs at least one row");
    std::vector<DiagramRow> rows;
    for (const auto& c : counts) rows.push_back(diagram_row(c));
    return rows;
}

double standard_error(std::span<const double> xs) {
    if (xs.size() < 2)
        throw Error(ErrorKind::TooFewUnits, "standard error needs at least two units, got " + std::to_string(xs.size()));
    const double n = static_cast<double>(xs.size());
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= n;
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
}

std::string format_optional(const std::optional<double>& v) {
    if (!v) return "NA";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", *v);
    return buf;
}

const HourScores& VerificationReport::hour(int h) const {
    for (const auto& s : hours)
        if (s.hour == h) return s;
    throw Error(ErrorKind::DomainError, "report has no hour " + std::to_string(h));
}

ReportBuilder::ReportBuilder(std::string model, std::string split, std::vector<double> thresholds,
                             std::vector<int> hours)
    : model_(std::move(model)), split_(std::move(split)), thresholds_(std::move(thresholds)), hours_(std::move(hours)) {
    for (int h : hours_)
        if (h < 0 || h >= kHours) throw Error(ErrorKind::DomainError, "hour index " + std::to_string(h) + " out of range");
    total_ = empty_accum();
}

ReportBuilder::Accum ReportBuilder::empty_accum() const {
    Accum a;
    a.wmae_05.assign(hours_.size(), 0.0);
    a.wmae_0.assign(hours_.size(), 0.0);
    a.counts.assign(hours_.size(), {});
    for (auto& row : a.counts)
        for (double thr : thresholds_) row.push_back(ConfusionCounts{0, 0, 0, 0, thr});
    return a;
}

void ReportBuilder::accumulate(Accum& a, std::span<const Grid> targets, std::span<const Grid> preds) const {
    ++a.samples;
    for (std::size_t i = 0; i < hours_.size(); ++i) {
        const Grid& y = targets[hours_[i]];
        const Grid& p = preds[hours_[i]];
        a.wmae_05[i] += loss::wmae(y.values, p.values, 0.5);
        a.wmae_0[i] += loss::wmae(y.values, p.values, 0.0);
        for (std::size_t k = 0; k < thresholds_.size(); ++k) a.counts[i][k] += confusion(y, p, thresholds_[k]);
    }
}

void ReportBuilder::add(Minutes anchor, std::span<const Grid> targets, std::span<const Grid> preds) {
    if (targets.size() != kHours || preds.size() != kHours)
        throw Error(ErrorKind::ShapeMismatch, "report expects three hourly maps");
    for (int t = 0; t < kHours; ++t)
        if (!targets[t].same_shape(preds[t])) throw Error(ErrorKind::ShapeMismatch, "report: shape mismatch");
    accumulate(total_, targets, preds);
    auto [it, fresh] = per_day_.try_emplace(day_index(anchor));
    if (fresh) it->second = empty_accum();
    accumulate(it->second, targets, preds);
}

void ReportBuilder::add(const SequenceSample& sample, const ForecastBundle& forecast) {
    std::array<Grid, kHours> targets;
    for (int t = 0; t < kHours; ++t) targets[t] = sample.targets[t].grid;
    add(sample.anchor, targets, forecast.predictions);
}

VerificationReport ReportBuilder::finish() const {
    if (total_.samples == 0) throw Error(ErrorKind::EmptySplit, "no samples for " + model_ + " on " + split_);
    VerificationReport r;
    r.model = model_;
    r.split = split_;
    r.thresholds = thresholds_;
    r.samples = total_.samples;
    r.days = per_day_.size();
    const double n = static_cast<double>(total_.samples);
    for (std::size_t i = 0; i < hours_.size(); ++i) {
        HourScores h;
        h.hour = hours_[i];
        h.wmae_05 = total_.wmae_05[i] / n;
        h.wmae_0 = total_.wmae_0[i] / n;
        h.counts = total_.counts[i];
        std::vector<double> d05, d0;
        std::vector<std::vector<double>> dcsi(thresholds_.size());
        for (const auto& [day, a] : per_day_) {
            d05.push_back(a.wmae_05[i] / static_cast<double>(a.samples));
            d0.push_back(a.wmae_0[i] / static_cast<double>(a.samples));
            for (std::size_t k = 0; k < thresholds_.size(); ++k)
                if (auto c = csi(a.counts[i][k])) dcsi[k].push_back(*c);
        }
        if (d05.size() >= 2) {
            h.se_wmae_05 = standard_error(d05);
            h.se_wmae_0 = standard_error(d0);
        }
        for (auto& xs : dcsi)
            h.se_csi.push_back(xs.size() >= 2 ? std::optional<double>(standard_error(xs)) : std::nullopt);
        r.hours.push_back(std::move(h));
    }
    return r;
}

std::string report_csv(std::span<const VerificationReport> reports) {
    std::ostringstream os;
    os << "model,split,hour,threshold,samples,days,wmae_th0.5,wmae_th0,se_wmae_th0.5,se_wmae_th0,"
          "tp,fp,tn,fn,csi,hss,pod,sr,bias,se_csi\n";
    for (const auto& r : reports) {
        for (const auto& h : r.hours) {
            for (std::size_t k = 0; k < r.thresholds.size(); ++k) {
                const auto& c = h.counts[k];
                os << r.model << ',' << r.split << ",H" << h.hour << ',' << format_optional(r.thresholds[k]) << ','
                   << r.samples << ',' << r.days << ',' << format_optional(h.wmae_05) << ','
                   << format_optional(h.wmae_0) << ',' << format_optional(h.se_wmae_05) << ','
                   << format_optional(h.se_wmae_0) << ',' << c.tp << ',' << c.fp << ',' << c.tn << ',' << c.fn << ','
                   << format_optional(csi(c)) << ',' << format_optional(hss(c)) << ',' << format_optional(pod(c))
                   << ',' << format_optional(success_ratio(c)) << ',' << format_optional(frequency_bias(c)) << ','
                   << format_optional(h.se_csi[k]) << '\n';
            }
        }
    }
    return os.str();
}

std::string diagram_csv(std::span<const VerificationReport> reports) {
    std::ostringstream os;
    os << "model,hour,threshold,pod,sr,csi,bias\n";
    for (const auto& r : reports) {
        for (const auto& h : r.hours) {
            for (const auto& row : performance_diagram_rows(h.counts)) {
                os << r.model << ",H" << h.hour << ',' << format_optional(row.threshold) << ','
                   << format_optional(row.pod) << ',' << format_optional(row.sr) << ',' << format_optional(row.csi)
                   << ',' << format_optional(row.bias) << '\n';
            }
        }
    }
    return os.str();
}

namespace {

std::optional<double> parse_optional(const std::string& s) {
    if (s == "NA") return std::nullopt;
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used == s.size()) return v;
    } catch (const std::exception&) {
    }
    throw Error(ErrorKind::IoError, "bad number '" + s + "' in report");
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

}  // namespace

std::vector<VerificationReport> parse_report_csv(std::string_view text) {
    std::istringstream is{std::string(text)};
    std::string line;
    if (!std::getline(is, line) || !line.starts_with("model,split,hour,threshold"))
        throw Error(ErrorKind::IoError, "not a verification report");
    std::vector<VerificationReport> reports;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        if (f.size() != 20) throw Error(ErrorKind::IoError, "report row has " + std::to_string(f.size()) + " fields");
        if (reports.empty() || reports.back().model != f[0] || reports.back().split != f[1]) {
            VerificationReport r;
            r.model = f[0];
            r.split = f[1];
            r.samples = std::stoul(f[4]);
            r.days = std::stoul(f[5]);
            reports.push_back(std::move(r));
        }
        VerificationReport& r = reports.back();
        const int hour = std::stoi(f[2].substr(1));
        if (r.hours.empty() || r.hours.back().hour != hour) {
            HourScores h;
            h.hour = hour;
            h.wmae_05 = parse_optional(f[6]).value_or(0.0);
            h.wmae_0 = parse_optional(f[7]).value_or(0.0);
            h.se_wmae_05 = parse_optional(f[8]);
            h.se_wmae_0 = parse_optional(f[9]);
            r.hours.push_back(std::move(h));
        }
        const double thr = parse_optional(f[3]).value_or(0.0);
        if (r.hours.size() == 1) r.thresholds.push_back(thr);
        ConfusionCounts c{std::stoll(f[10]), std::stoll(f[11]), std::stoll(f[12]), std::stoll(f[13]), thr};
        r.hours.back().counts.push_back(c);
        r.hours.back().se_csi.push_back(parse_optional(f[19]));
    }
    return reports;
}

namespace {
void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error(ErrorKind::IoError, "cannot write " + path.string());
    f << text;
}
}  // namespace

void write_report_csv(const std::filesystem::path& path, std::span<const VerificationReport> reports) {
    write_text(path, report_csv(reports));
}

void write_diagram_csv(const std::filesystem::path& path, std::span<const VerificationReport> reports) {
    write_text(path, diagram_csv(reports));
}

}  // namespace nowcast::metrics
