// lrt: automated low-rank training pipeline.
//
// Subcommands: train, analyze, profile, factorize, report. Exit codes:
// 0 success, 1 pipeline error (one-line diagnostic on stderr), 2 flag
// misuse.
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <memory>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "lrt/dataset.hpp"
#include "lrt/json_io.hpp"
#include "lrt/snapshot.hpp"
#include "lrt/trainer.hpp"

namespace fs = std::filesystem;
using namespace lrt;

namespace {

struct SeedOverride {
    std::optional<std::uint64_t> flag;

    // Precedence: --seed flag, then CF_SEED, then the config file.
    void apply(TrainConfig& cfg) const {
        if (const char* env = std::getenv("CF_SEED")) {
            cfg.seed = std::strtoull(env, nullptr, 10);
        }
        if (flag) cfg.seed = *flag;
    }
};

ModelSpec resolve_model(const std::string& model_path, const Dataset& data) {
    ModelSpec spec;
    spec.input = {data.channels, data.height, data.width};
    spec.num_classes = data.num_classes;
    if (model_path.empty()) {
        // Default task model: two 256-wide hidden layers plus classifier.
        spec.hidden = {{LayerKind::dense, 256}, {LayerKind::dense, 256}};
        return spec;
    }
    return model_spec_from_json(read_text_file(model_path), spec.input,
                                spec.num_classes);
}

std::unique_ptr<Clock> resolve_clock(const std::string& name) {
    if (name == "wall") return nullptr; // trainer default
    if (name == "flops") {
        return std::make_unique<DeviceModelClock>(
            DeviceModelClock::flops_proportional());
    }
    if (name == "roofline") {
        return std::make_unique<DeviceModelClock>(DeviceModelClock::roofline());
    }
    throw InvalidInput("unknown profile clock: " + name);
}

void write_train_outputs(const fs::path& out_dir, const TrainReport& report,
                         std::span<const RankTrajectory> trajectories) {
    write_text_file((out_dir / "report.json").string(), report_to_json(report));
    std::ostringstream csv;
    write_trajectory_csv(csv, trajectories);
    write_text_file((out_dir / "trajectories.csv").string(), csv.str());
    write_text_file((out_dir / "plan.json").string(), plan_to_json(report.plan));
}

int cmd_train(const std::string& config_path, const std::string& data_path,
              const std::string& out_dir, const std::string& model_path,
              const SeedOverride& seed, const std::string& clock_name) {
    TrainConfig cfg = train_config_from_json(read_text_file(config_path));
    seed.apply(cfg);
    const Dataset data = load_dataset(data_path);
    const ModelSpec spec = resolve_model(model_path, data);
    const auto clock = resolve_clock(clock_name);

    fs::create_directories(out_dir);
    const fs::path out(out_dir);
    TrainOutput result;
    try {
        result = train_adaptive(spec, data, cfg, clock.get(),
                                (out / "snapshots").string());
    } catch (const TrainingDiverged& e) {
        write_text_file((out / "report.json").string(),
                        report_to_json(e.partial));
        throw;
    }

    write_train_outputs(out, result.report, result.trajectories);
    write_snapshot((out / "final_model.cfsnap").string(), cfg.total_epochs,
                   model_to_records(result.model));

    const TrainReport& r = result.report;
    std::printf("prefix K            %zu\n", static_cast<std::size_t>(r.prefix_k));
    if (r.switch_epoch) {
        std::printf("switch epoch        %zu%s%s\n",
                    static_cast<std::size_t>(*r.switch_epoch),
                    r.switch_forced ? " (forced)" : "",
                    r.fallback_used ? " (fallback)" : "");
    } else {
        std::printf("switch epoch        none\n");
    }
    std::printf("params full-rank    %zu\n",
                static_cast<std::size_t>(r.params_full_rank));
    std::printf("params low-rank     %zu\n",
                static_cast<std::size_t>(r.params_low_rank));
    std::printf("final accuracy      %.4f\n", r.final_accuracy);
    std::printf("wall s (full rank)  %.2f\n", r.wall_seconds_full_rank);
    std::printf("wall s (low rank)   %.2f\n", r.wall_seconds_low_rank);
    return 0;
}

int cmd_analyze(const std::string& snapshots_dir, const std::string& out_dir,
                const AnalysisOptions& options) {
    const AnalysisResult result = analyze_snapshots(snapshots_dir, options);
    fs::create_directories(out_dir);
    const fs::path out(out_dir);

    std::ostringstream csv;
    write_trajectory_csv(csv, result.trajectories);
    write_text_file((out / "trajectories.csv").string(), csv.str());

    std::ostringstream summary;
    summary << "{\n  \"enough_data\": " << (result.enough_data ? "true" : "false")
            << ",\n  \"stabilized\": " << (result.stabilized ? "true" : "false")
            << ",\n  \"fallback\": " << (result.fallback ? "true" : "false")
            << ",\n  \"switch_epoch\": ";
    if (result.switch_epoch) {
        summary << *result.switch_epoch;
    } else {
        summary << "null";
    }
    summary << "\n}\n";
    write_text_file((out / "analysis.json").string(), summary.str());

    if (result.plan) {
        write_text_file((out / "plan.json").string(), plan_to_json(*result.plan));
    }
    if (!result.enough_data) {
        std::printf("not enough data: need more epochs before the "
                    "stabilization window applies\n");
    } else {
        std::printf("stabilized %s, switch epoch %zu%s\n",
                    result.stabilized ? "yes" : "no",
                    static_cast<std::size_t>(*result.switch_epoch),
                    result.fallback ? " (fallback to last epoch)" : "");
    }
    return 0;
}

int cmd_profile(const std::string& config_path, const std::string& out_file,
                const std::string& data_path, const std::string& model_path,
                const SeedOverride& seed, const std::string& clock_name) {
    TrainConfig cfg = train_config_from_json(read_text_file(config_path));
    seed.apply(cfg);
    const Dataset data = load_dataset(data_path);
    const ModelSpec spec = resolve_model(model_path, data);

    Rng rng_init(cfg.seed);
    Rng rng_profile(cfg.seed ^ 0xD1B54A32D192ED03ULL);
    HybridModel model = build_model(spec, rng_init);
    const auto stacks = stacks_from_model(model, cfg.batch_size);
    if (stacks.empty()) throw ProfileError("model has no factorizable layers");

    const auto clock_ptr = resolve_clock(clock_name);
    WallClock wall;
    Clock& clock = clock_ptr ? *clock_ptr : static_cast<Clock&>(wall);
    const ProfileResult result =
        select_k(model, stacks, ProfilerConfig{}, clock, rng_profile);
    write_text_file(out_file, profile_result_to_json(result));
    std::printf("K_hat = %zu over %zu stacks\n",
                static_cast<std::size_t>(result.k_hat), result.stacks.size());
    return 0;
}

TensorRecord dense_factor_record(const std::string& name, const DenseMatrix& m) {
    TensorRecord t;
    t.name = name;
    t.dims = {static_cast<std::uint32_t>(m.rows()),
              static_cast<std::uint32_t>(m.cols())};
    t.data = m.storage();
    return t;
}

TensorRecord conv_factor_record(const std::string& name, const ConvKernel& k) {
    TensorRecord t;
    t.name = name;
    t.kind = TensorRecord::Kind::conv;
    t.dims = {static_cast<std::uint32_t>(k.out_channels),
              static_cast<std::uint32_t>(k.in_channels),
              static_cast<std::uint32_t>(k.kernel),
              static_cast<std::uint32_t>(k.kernel)};
    t.data = k.data;
    return t;
}

int cmd_factorize(const std::string& snapshot_path, const std::string& plan_path,
                  const std::string& out_file) {
    const FactorizationPlan plan = plan_from_json(read_text_file(plan_path));
    auto [epoch, records] = read_snapshot(snapshot_path);

    std::vector<TensorRecord> out;
    for (auto& record : records) {
        const PlanEntry* entry = plan.find(record.name);
        if (!entry || entry->skip) {
            out.push_back(std::move(record));
            continue;
        }
        if (record.dims.size() == 2) {
            const DenseMatrix w(record.dims[0], record.dims[1], record.data);
            const count full = std::min(w.rows(), w.cols());
            if (entry->rank < 1 || entry->rank > full) {
                throw PlanError("plan rank " + std::to_string(entry->rank) +
                                " invalid for layer " + record.name);
            }
            const FactorizedPair pair = spectral_factorize(w, entry->rank);
            out.push_back(dense_factor_record(record.name + ".u", pair.u));
            out.push_back(dense_factor_record(record.name + ".vt", pair.v_t));
        } else if (record.dims.size() == 4) {
            ConvKernel kernel(record.dims[0], record.dims[1], record.dims[2]);
            kernel.data = record.data;
            const DenseMatrix unrolled = unroll_conv(kernel);
            const count full = std::min(unrolled.rows(), unrolled.cols());
            if (entry->rank < 1 || entry->rank > full) {
                throw PlanError("plan rank " + std::to_string(entry->rank) +
                                " invalid for layer " + record.name);
            }
            const FactorizedPair pair = spectral_factorize_conv(
                unrolled, entry->rank, kernel.in_channels, kernel.out_channels,
                kernel.kernel);
            const auto [u_kernel, v_kernel] = reshape_to_conv(pair);
            out.push_back(conv_factor_record(record.name + ".u", u_kernel));
            out.push_back(conv_factor_record(record.name + ".vt", v_kernel));
        } else {
            throw PlanError("layer " + record.name +
                            " is not a factorizable weight record");
        }
    }
    for (const auto& entry : plan.ranks) {
        bool found = false;
        for (const auto& record : out) {
            if (record.name == entry.layer || record.name == entry.layer + ".u") {
                found = true;
                break;
            }
        }
        if (!found) {
            throw PlanError("plan names layer " + entry.layer +
                            " absent from the snapshot");
        }
    }
    write_snapshot(out_file, epoch, out);
    std::printf("wrote %s (%zu records)\n", out_file.c_str(), out.size());
    return 0;
}

int cmd_report(const std::string& in_dir) {
    const std::string text =
        read_text_file((fs::path(in_dir) / "report.json").string());
    const auto j = nlohmann::json::parse(text);
    std::printf("%-22s %zu\n", "epochs", j.at("epochs").size());
    std::printf("%-22s %s\n", "prefix K", j.at("prefix_k").dump().c_str());
    std::printf("%-22s %s\n", "switch epoch", j.at("switch_epoch").dump().c_str());
    const double full = j.at("params_full_rank").get<double>();
    const double low = j.at("params_low_rank").get<double>();
    std::printf("%-22s %.0f\n", "params full-rank", full);
    std::printf("%-22s %.0f (%.1f%%)\n", "params low-rank", low,
                100.0 * low / full);
    std::printf("%-22s %s\n", "final accuracy",
                j.at("final_accuracy").dump().c_str());
    std::size_t factorized = 0, skipped = 0;
    for (const auto& e : j.at("plan").at("ranks")) {
        if (e.at("skip").get<bool>()) {
            ++skipped;
        } else {
            ++factorized;
        }
    }
    std::printf("%-22s %zu (+%zu skipped)\n", "factorized layers", factorized,
                skipped);
    if (!j.at("epochs").empty()) {
        const auto& last = j.at("epochs").back();
        std::printf("%-22s %s (phase %s)\n", "last epoch accuracy",
                    last.at("accuracy").dump().c_str(),
                    last.at("phase").get<std::string>().c_str());
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Automated low-rank training: full-rank warm-up with rank "
                 "tracking, stabilization-triggered factorization, low-rank "
                 "finish"};
    app.require_subcommand(1);

    std::string config_path, data_path = "synthetic-rank2", out_path, model_path;
    std::string clock_name = "wall";
    SeedOverride seed;
    std::uint64_t seed_value = 0;

    auto* train = app.add_subcommand("train", "run the automated schedule");
    train->add_option("--config", config_path, "TrainConfig JSON")->required();
    train->add_option("--data", data_path,
                      "builtin dataset name or <images>,<labels> IDX pair");
    train->add_option("--out", out_path, "output directory")->required();
    train->add_option("--model", model_path, "model layers JSON");
    auto* train_seed = train->add_option("--seed", seed_value, "seed override");
    train->add_option("--profile-clock", clock_name,
                      "wall | flops | roofline (timing source for the K "
                      "decision)");

    std::string snapshots_dir;
    AnalysisOptions analysis;
    std::string estimator_mode = "scaled_stable";
    auto* analyze = app.add_subcommand("analyze", "offline snapshot analysis");
    analyze->add_option("--snapshots", snapshots_dir, "snapshot directory")
        ->required();
    analyze->add_option("--out", out_path, "output directory")->required();
    analyze->add_option("--estimator", estimator_mode,
                        "stable | scaled_stable | max_rule");
    analyze->add_option("--accum-fraction", analysis.estimator.accum_fraction,
                        "max_rule mass fraction");
    analyze->add_option("--epsilon", analysis.stabilization.epsilon,
                        "stabilization threshold");
    analyze->add_option("--window", analysis.stabilization.window,
                        "derivative window");
    analyze->add_option("--min-epochs", analysis.stabilization.min_epochs,
                        "observations before stabilization may fire");
    analyze->add_option("--prefix", analysis.prefix_k, "unfactorized prefix K");

    auto* profile = app.add_subcommand("profile", "layer-stack speedup probe");
    profile->add_option("--config", config_path, "TrainConfig JSON")->required();
    profile->add_option("--out", out_path, "output JSON file")->required();
    profile->add_option("--data", data_path, "dataset (for input shape)");
    profile->add_option("--model", model_path, "model layers JSON");
    auto* profile_seed = profile->add_option("--seed", seed_value, "seed override");
    profile->add_option("--profile-clock", clock_name, "wall | flops | roofline");

    std::string snapshot_path, plan_path;
    auto* factorize =
        app.add_subcommand("factorize", "apply a plan to one snapshot");
    factorize->add_option("--snapshot", snapshot_path, "CFSNAP01 file")
        ->required();
    factorize->add_option("--plan", plan_path, "plan JSON")->required();
    factorize->add_option("--out", out_path, "output snapshot")->required();

    std::string in_dir;
    auto* report = app.add_subcommand("report", "summarize a train output dir");
    report->add_option("--in", in_dir, "train output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e); // --help path
        app.exit(e);
        return 2;
    }

    try {
        if (*train_seed || *profile_seed) seed.flag = seed_value;
        if (app.got_subcommand(train)) {
            return cmd_train(config_path, data_path, out_path, model_path, seed,
                             clock_name);
        }
        if (app.got_subcommand(analyze)) {
            analysis.estimator.mode = rank_mode_from_name(estimator_mode);
            return cmd_analyze(snapshots_dir, out_path, analysis);
        }
        if (app.got_subcommand(profile)) {
            return cmd_profile(config_path, out_path, data_path, model_path,
                               seed, clock_name);
        }
        if (app.got_subcommand(factorize)) {
            return cmd_factorize(snapshot_path, plan_path, out_path);
        }
        if (app.got_subcommand(report)) {
            return cmd_report(in_dir);
        }
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 2;
}
