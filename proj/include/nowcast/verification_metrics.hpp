#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nowcast/forecast.hpp"
#include "nowcast/grid_store.hpp"

namespace nowcast::metrics {

inline const std::vector<double> kDefaultThresholds{1, 3, 5, 10, 15, 20, 30, 40};

struct ConfusionCounts {
    std::int64_t tp = 0;
    std::int64_t fp = 0;
    std::int64_t tn = 0;
    std::int64_t fn = 0;
    double threshold = 0.0;

    std::int64_t total() const { return tp + fp + tn + fn; }
    ConfusionCounts& operator+=(const ConfusionCounts& o);
    friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

/// Both fields are binarized with value >= threshold.
ConfusionCounts confusion(std::span<const double> target, std::span<const double> pred, double threshold);
ConfusionCounts confusion(const Grid& target, const Grid& pred, double threshold);

// nullopt is the "undefined" marker for a zero denominator.
std::optional<double> csi(const ConfusionCounts& c);
std::optional<double> hss(const ConfusionCounts& c);
std::optional<double> pod(const ConfusionCounts& c);
std::optional<double> success_ratio(const ConfusionCounts& c);
std::optional<double> frequency_bias(const ConfusionCounts& c);

/// Loss-module WMAE evaluated separately for each hour.
std::array<double, kHours> wmae_metric(std::span<const Grid> targets, std::span<const Grid> preds, double th);

struct DiagramRow {
    double threshold = 0.0;
    std::optional<double> pod, sr, csi, bias;
    bool defined() const { return pod && sr && csi && bias; }
};

DiagramRow diagram_row(const ConfusionCounts& c);
std::vector<DiagramRow> performance_diagram_rows(std::span<const ConfusionCounts> counts);

/// Sample standard deviation over sqrt(n). Needs at least two units.
double standard_error(std::span<const double> per_unit_scores);

std::string format_optional(const std::optional<double>& v);

struct HourScores {
    int hour = 0;
    double wmae_05 = 0.0;  // Th = 0.5
    double wmae_0 = 0.0;   // Th = 0
    std::optional<double> se_wmae_05, se_wmae_0;
    std::vector<ConfusionCounts> counts;                // one per threshold, pooled
    std::vector<std::optional<double>> se_csi;          // per threshold, over daily CSI
};

struct VerificationReport {
    std::string model;
    std::string split;
    std::vector<double> thresholds;
    std::size_t samples = 0;
    std::size_t days = 0;
    std::vector<HourScores> hours;

    const HourScores& hour(int h) const;
};

/// Streams (targets, forecast) pairs and aggregates them. Counts are pooled
/// over the whole split; standard errors use per-calendar-day aggregates.
class ReportBuilder {
public:
    ReportBuilder(std::string model, std::string split, std::vector<double> thresholds = kDefaultThresholds,
                  std::vector<int> hours = {0, 1, 2});

    void add(const SequenceSample& sample, const ForecastBundle& forecast);
    void add(Minutes anchor, std::span<const Grid> targets, std::span<const Grid> preds);
    VerificationReport finish() const;

private:
    struct Accum {
        std::size_t samples = 0;
        std::vector<double> wmae_05, wmae_0;                  // per hour
        std::vector<std::vector<ConfusionCounts>> counts;     // [hour][threshold]
    };
    std::string model_, split_;
    std::vector<double> thresholds_;
    std::vector<int> hours_;
    Accum total_;
    std::map<std::int64_t, Accum> per_day_;

    Accum empty_accum() const;
    void accumulate(Accum& a, std::span<const Grid> targets, std::span<const Grid> preds) const;
};

/// One row per (model, split, hour, threshold).
void write_report_csv(const std::filesystem::path& path, std::span<const VerificationReport> reports);
/// One row per (model, hour, threshold): POD, SR, CSI, bias.
void write_diagram_csv(const std::filesystem::path& path, std::span<const VerificationReport> reports);
std::string report_csv(std::span<const VerificationReport> reports);
std::string diagram_csv(std::span<const VerificationReport> reports);
/// Inverse of report_csv: rebuilds reports (counts, WMAE, standard errors).
std::vector<VerificationReport> parse_report_csv(std::string_view text);

}  // namespace nowcast::metrics
