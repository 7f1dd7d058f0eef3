// nowcast: synth / train / eval / predict / report

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "nowcast/baselines.hpp"
#include "nowcast/config.hpp"
#include "nowcast/errors.hpp"
#include "nowcast/grid_store.hpp"
#include "nowcast/nowcast_net.hpp"
#include "nowcast/plots.hpp"
#include "nowcast/run_manifest.hpp"
#include "nowcast/synthetic_weather.hpp"
#include "nowcast/trainer.hpp"
#include "nowcast/verification_metrics.hpp"

namespace fs = std::filesystem;
using namespace nowcast;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

int exit_code_for(ErrorKind k) {
    switch (k) {
        case ErrorKind::UsageError:
        case ErrorKind::ConfigError:
            return kExitUsage;
        case ErrorKind::NaNLoss:
        case ErrorKind::DomainError:
        case ErrorKind::DegenerateMap:
        case ErrorKind::DegenerateQuantile:
        case ErrorKind::TooFewUnits:
            return kExitNumeric;
        default:
            return kExitData;
    }
}

std::string read_file(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw Error(ErrorKind::UsageError, "cannot read " + p.string());
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

KeyValueFile load_config(const std::string& path) {
    if (path.empty()) return KeyValueFile::parse("", "<defaults>");
    if (!fs::is_regular_file(path)) throw Error(ErrorKind::UsageError, "config file not found: " + path);
    return KeyValueFile::load(path);
}

// --seed beats NOWCAST_SEED, which beats the config file
std::optional<std::uint64_t> seed_override(const std::optional<std::uint64_t>& flag) {
    if (flag) return flag;
    if (const char* env = std::getenv("NOWCAST_SEED"); env && *env) {
        try {
            std::size_t used = 0;
            const unsigned long long v = std::stoull(env, &used);
            if (used == std::string(env).size()) return v;
        } catch (const std::exception&) {
        }
        throw Error(ErrorKind::UsageError, std::string("NOWCAST_SEED is not an unsigned integer: ") + env);
    }
    return std::nullopt;
}

std::vector<int> parse_int_list(const std::string& text) {
    std::vector<int> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            out.push_back(std::stoi(item));
        } catch (const std::exception&) {
            throw Error(ErrorKind::UsageError, "bad list item '" + item + "'");
        }
    }
    return out;
}

std::vector<double> parse_double_list(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            out.push_back(std::stod(item));
        } catch (const std::exception&) {
            throw Error(ErrorKind::UsageError, "bad list item '" + item + "'");
        }
    }
    return out;
}

ManifestFrameSource open_corpus(const std::string& dir) {
    const fs::path m = fs::path(dir) / "manifest.tsv";
    if (!fs::is_regular_file(m)) throw Error(ErrorKind::IoError, "no manifest.tsv in " + dir);
    return ManifestFrameSource(read_manifest(m));
}

void prepare_out(const std::string& out) {
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw Error(ErrorKind::IoError, "cannot create " + out + ": " + ec.message());
}

// ---------------------------------------------------------------------------

struct SynthArgs {
    std::string config, out;
    std::optional<std::uint64_t> seed;
    bool print_config = false;
};

int cmd_synth(const SynthArgs& a) {
    CorpusConfig cfg = parse_corpus_config(load_config(a.config));
    if (auto s = seed_override(a.seed)) cfg.seed = *s;
    if (a.print_config) {
        std::cout << corpus_config_to_kv(cfg).to_text();
        return kExitOk;
    }
    if (a.config.empty()) throw Error(ErrorKind::UsageError, "synth needs --config");
    if (a.out.empty()) throw Error(ErrorKind::UsageError, "synth needs --out");
    prepare_out(a.out);
    const auto manifest = sample_corpus(cfg, a.out);
    const std::string effective = corpus_config_to_kv(cfg).to_text();
    plot::write_text(fs::path(a.out) / "corpus.cfg", effective);
    RunManifest rm;
    rm.command = "synth";
    rm.config_path = a.config;
    rm.output_dir = a.out;
    rm.seed = cfg.seed;
    rm.inputs_hash = blob_hash(effective);
    write_run_manifest(a.out, rm);
    std::cout << "wrote " << manifest.entries.size() << " frames to " << a.out << "\n";
    return kExitOk;
}

struct TrainArgs {
    std::string config, data, out, variant;
    std::optional<std::uint64_t> seed;
    bool print_config = false;
};

int cmd_train(const TrainArgs& a) {
    KeyValueFile kv = load_config(a.config);
    if (!a.variant.empty()) {
        train::parse_variant(a.variant);
        kv.set("train.variant", a.variant);
    }
    train::TrainConfig cfg = train::parse_train_config(kv);
    if (auto s = seed_override(a.seed)) cfg.seed = *s;
    if (a.print_config) {
        std::cout << train::train_config_to_kv(cfg).to_text();
        return kExitOk;
    }
    if (a.data.empty() || a.out.empty()) throw Error(ErrorKind::UsageError, "train needs --data and --out");
    prepare_out(a.out);
    cfg.checkpoint_dir = a.out;
    const auto source = open_corpus(a.data);
    const auto result = train::train(cfg, source);
    const std::string effective = train::train_config_to_kv(cfg).to_text();
    plot::write_text(fs::path(a.out) / "train.cfg", effective);
    plot::write_text(fs::path(a.out) / "ledger_stable.csv", result.ledger.csv(false));
    RunManifest rm;
    rm.command = "train";
    rm.config_path = a.config;
    rm.output_dir = a.out;
    rm.seed = cfg.seed;
    rm.inputs_hash = blob_hash(effective + tree_hash(a.data, {kRunManifestName}));
    rm.volatile_files = {"ledger.csv"};
    write_run_manifest(a.out, rm);
    std::cout << "best epoch " << result.ledger.best_epoch << " val L_pred "
              << result.ledger.epochs[result.ledger.best_epoch].val_lpred << "\n";
    return kExitOk;
}

struct EvalArgs {
    std::string checkpoint, data, out, split = "test", hours = "0,1,2", thresholds;
    bool with_baselines = false;
};

int cmd_eval(const EvalArgs& a) {
    if (a.checkpoint.empty() || a.data.empty() || a.out.empty())
        throw Error(ErrorKind::UsageError, "eval needs --checkpoint, --data and --out");
    const Split split = parse_split(a.split);
    const std::vector<int> hours = parse_int_list(a.hours);
    const std::vector<double> thresholds =
        a.thresholds.empty() ? metrics::kDefaultThresholds : parse_double_list(a.thresholds);
    net::ModelState state = net::load_checkpoint(a.checkpoint);
    const auto source = open_corpus(a.data);
    const auto samples = window_samples(source, split);
    const std::string split_name(to_string(split));

    std::vector<metrics::VerificationReport> reports;
    reports.push_back(train::evaluate_checkpoint(state, samples, split_name, thresholds, hours));
    if (a.with_baselines) {
        reports.push_back(train::evaluate_forecaster(
            [](const SequenceSample& s) { return baseline::persistence_forecast(s, 10); }, samples, "Last 10min",
            split_name, thresholds, hours));
        reports.push_back(train::evaluate_forecaster(
            [](const SequenceSample& s) { return baseline::persistence_forecast(s, 20); }, samples, "Last 20min",
            split_name, thresholds, hours));
        reports.push_back(train::evaluate_forecaster(
            [](const SequenceSample& s) { return baseline::extrapolate(s); }, samples, "Extrapolation (block matching)",
            split_name, thresholds, hours));
    }
    prepare_out(a.out);
    const fs::path out(a.out);
    metrics::write_report_csv(out / "report.csv", reports);
    metrics::write_diagram_csv(out / "diagram.csv", reports);
    for (int h : hours) {
        plot::write_text(out / ("skill_H" + std::to_string(h) + ".svg"), plot::skill_chart_svg(reports, h));
        plot::write_text(out / ("performance_H" + std::to_string(h) + ".svg"),
                         plot::performance_diagram_svg(reports, h));
    }
    RunManifest rm;
    rm.command = "eval";
    rm.output_dir = a.out;
    rm.seed = state.model.seed();
    rm.inputs_hash = blob_hash(file_hash(a.checkpoint) + tree_hash(a.data, {kRunManifestName}) + a.split + a.hours +
                               a.thresholds + (a.with_baselines ? "+baselines" : ""));
    write_run_manifest(out, rm);
    for (const auto& r : reports) {
        std::cout << r.model << " (" << r.samples << " samples)";
        for (const auto& h : r.hours) std::cout << "  H" << h.hour << " WMAE(0.5)=" << h.wmae_05;
        std::cout << "\n";
    }
    return kExitOk;
}

struct PredictArgs {
    std::string checkpoint, data, out, anchor;
};

int cmd_predict(const PredictArgs& a) {
    if (a.checkpoint.empty() || a.data.empty() || a.out.empty() || a.anchor.empty())
        throw Error(ErrorKind::UsageError, "predict needs --checkpoint, --data, --anchor and --out");
    net::ModelState state = net::load_checkpoint(a.checkpoint);
    const auto source = open_corpus(a.data);
    const Minutes anchor = parse_timestamp(a.anchor);
    std::optional<SequenceSample> sample;
    for (auto& s : window_samples(source))
        if (s.anchor == anchor) sample = std::move(s);
    if (!sample)
        throw Error(ErrorKind::MissingFrame,
                    "no complete window at " + format_timestamp(anchor) + " (needs frames anchor-60 .. anchor+170)");
    const ForecastBundle fb = state.model.forecast_sample(*sample, state.norm, state.variant);
    prepare_out(a.out);
    const fs::path out(a.out);
    std::vector<std::vector<Grid>> rows;
    for (int t = 0; t < kHours; ++t) {
        write_grid(out / ("pred_H" + std::to_string(t) + ".nwg"), fb.predictions[t]);
        std::vector<Grid> row{sample->targets[t].grid, fb.predictions[t]};
        if (!fb.attention.empty()) {
            write_grid(out / ("attention_H" + std::to_string(t) + ".nwg"), fb.attention[t]);
            row.push_back(fb.attention[t]);
        }
        rows.push_back(std::move(row));
    }
    plot::write_png(out / "panel.png", plot::panel(rows, 4, !fb.attention.empty()));
    RunManifest rm;
    rm.command = "predict";
    rm.output_dir = a.out;
    rm.seed = state.model.seed();
    rm.inputs_hash = blob_hash(file_hash(a.checkpoint) + tree_hash(a.data, {kRunManifestName}) + a.anchor);
    write_run_manifest(out, rm);
    std::cout << "wrote predictions for " << format_timestamp(anchor) << " to " << a.out << "\n";
    return kExitOk;
}

struct ReportArgs {
    std::vector<std::string> evals;
    std::string out;
};

std::string wmae_table(const std::vector<metrics::VerificationReport>& reports) {
    std::ostringstream os;
    os << "| model | WMAE(Th=0.5) H0 | H1 | H2 | WMAE(Th=0) H0 | H1 | H2 |\n|---|---|---|---|---|---|---|\n";
    for (const auto& r : reports) {
        os << "| " << r.model;
        for (bool th05 : {true, false})
            for (int h = 0; h < kHours; ++h) {
                os << " | ";
                for (const auto& hs : r.hours)
                    if (hs.hour == h) os << metrics::format_optional(th05 ? hs.wmae_05 : hs.wmae_0);
            }
        os << " |\n";
    }
    return os.str();
}

std::string skill_table(const std::vector<metrics::VerificationReport>& reports, bool csi) {
    if (reports.empty()) return "";
    std::ostringstream os;
    os << "| model (H0) |";
    for (double t : reports[0].thresholds) os << " >=" << metrics::format_optional(t) << " |";
    os << "\n|---|";
    for (std::size_t i = 0; i < reports[0].thresholds.size(); ++i) os << "---|";
    os << "\n";
    for (const auto& r : reports) {
        os << "| " << r.model << " |";
        for (const auto& c : r.hours.front().counts) {
            const auto v = csi ? metrics::csi(c) : metrics::hss(c);
            char buf[32];
            if (v) std::snprintf(buf, sizeof buf, "%.4f", *v);
            os << ' ' << (v ? buf : "NA") << " |";
        }
        os << "\n";
    }
    return os.str();
}

int cmd_report(const ReportArgs& a) {
    if (a.evals.empty() || a.out.empty()) throw Error(ErrorKind::UsageError, "report needs --eval dirs and --out");
    std::vector<metrics::VerificationReport> reports;
    std::string inputs;
    for (const auto& dir : a.evals) {
        const fs::path p = fs::path(dir) / "report.csv";
        if (!fs::is_regular_file(p)) throw Error(ErrorKind::IoError, "no report.csv in " + dir);
        const std::string text = read_file(p);
        inputs += blob_hash(text);
        for (auto& r : metrics::parse_report_csv(text)) reports.push_back(std::move(r));
    }
    prepare_out(a.out);
    const fs::path out(a.out);
    metrics::write_report_csv(out / "combined_report.csv", reports);
    metrics::write_diagram_csv(out / "combined_diagram.csv", reports);
    std::ostringstream md;
    md << "# Verification summary\n\n## WMAE per hour\n\n" << wmae_table(reports) << "\n## CSI\n\n"
       << skill_table(reports, true) << "\n## HSS\n\n" << skill_table(reports, false);
    plot::write_text(out / "tables.md", md.str());
    std::set<int> hours;
    for (const auto& r : reports)
        for (const auto& h : r.hours) hours.insert(h.hour);
    for (int h : hours) {
        std::vector<metrics::VerificationReport> with_h;
        for (const auto& r : reports)
            for (const auto& hs : r.hours)
                if (hs.hour == h) with_h.push_back(r);
        plot::write_text(out / ("skill_H" + std::to_string(h) + ".svg"), plot::skill_chart_svg(with_h, h));
        plot::write_text(out / ("performance_H" + std::to_string(h) + ".svg"),
                         plot::performance_diagram_svg(with_h, h));
    }
    RunManifest rm;
    rm.command = "report";
    rm.output_dir = a.out;
    rm.inputs_hash = blob_hash(inputs);
    write_run_manifest(out, rm);
    std::cout << md.str();
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Precipitation nowcasting: synthetic data, training, verification"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolVersion);

    SynthArgs sa;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic storm corpus");
    synth->add_option("--config", sa.config, "Corpus config file");
    synth->add_option("--out", sa.out, "Output corpus directory");
    synth->add_option("--seed", sa.seed, "Seed (overrides NOWCAST_SEED and the config)");
    synth->add_flag("--print-config", sa.print_config, "Print the effective config and exit");

    TrainArgs ta;
    auto* trn = app.add_subcommand("train", "Train a model variant");
    trn->add_option("--config", ta.config, "Run config file");
    trn->add_option("--data", ta.data, "Corpus directory");
    trn->add_option("--out", ta.out, "Checkpoint directory");
    trn->add_option("--variant", ta.variant, "GRU+WMAE | GRU+WMAE+Bal | GRU+WMAE+Adv | GRU+WMAE+Atn | GRU+WMAE+Adv+Atn | classifier");
    trn->add_option("--seed", ta.seed, "Seed (overrides NOWCAST_SEED and the config)");
    trn->add_flag("--print-config", ta.print_config, "Print the effective config and exit");

    EvalArgs ea;
    auto* ev = app.add_subcommand("eval", "Verify a checkpoint on a split");
    ev->add_option("--checkpoint", ea.checkpoint, "Checkpoint file");
    ev->add_option("--data", ea.data, "Corpus directory");
    ev->add_option("--split", ea.split, "train | val | test")->capture_default_str();
    ev->add_option("--out", ea.out, "Report directory");
    ev->add_option("--hours", ea.hours, "Hour indices, e.g. 0,1,2")->capture_default_str();
    ev->add_option("--thresholds", ea.thresholds, "Thresholds in mm/hr (default 1,3,5,10,15,20,30,40)");
    ev->add_flag("--with-baselines", ea.with_baselines, "Also score persistence and extrapolation");

    PredictArgs pa;
    auto* pr = app.add_subcommand("predict", "Forecast one window");
    pr->add_option("--checkpoint", pa.checkpoint, "Checkpoint file");
    pr->add_option("--data", pa.data, "Corpus directory");
    pr->add_option("--anchor", pa.anchor, "Anchor time, YYYY-MM-DDTHH:MM or minutes since epoch");
    pr->add_option("--out", pa.out, "Output directory");

    ReportArgs ra;
    auto* rp = app.add_subcommand("report", "Merge eval outputs into tables and plots");
    rp->add_option("--eval", ra.evals, "Eval output directories")->expected(1, -1);
    rp->add_option("--out", ra.out, "Output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*synth) return cmd_synth(sa);
        if (*trn) return cmd_train(ta);
        if (*ev) return cmd_eval(ea);
        if (*pr) return cmd_predict(pa);
        if (*rp) return cmd_report(ra);
    } catch (const Error& e) {
        std::cerr << "error [" << to_string(e.kind()) << "]: " << e.what() << "\n";
        return exit_code_for(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitUsage;
}
