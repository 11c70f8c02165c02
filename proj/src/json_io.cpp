#include "lrt/json_io.hpp"

#include <fstream>
#include <limits>

#include <json.hpp>

namespace lrt {

using json = nlohmann::ordered_json;

namespace {

json estimator_to_json(const RankEstimatorConfig& e) {
    return json{{"mode", rank_mode_name(e.mode)}, {"p", e.accum_fraction}};
}

RankEstimatorConfig estimator_from_json(const json& j) {
    RankEstimatorConfig e;
    if (j.contains("mode")) e.mode = rank_mode_from_name(j.at("mode"));
    if (j.contains("p")) e.accum_fraction = j.at("p");
    if (j.contains("accum_fraction")) e.accum_fraction = j.at("accum_fraction");
    if (e.accum_fraction < 0.0 || e.accum_fraction > 1.0) {
        throw InvalidInput("estimator fraction must be in [0,1]");
    }
    return e;
}

json parse(const std::string& text, const char* what) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) throw FormatError(std::string(what) + ": invalid JSON");
    return j;
}

json plan_json(const FactorizationPlan& plan) {
    json j;
    j["switch_epoch"] = plan.switch_epoch;
    j["K"] = plan.prefix_k;
    j["estimator"] = estimator_to_json(plan.estimator);
    json ranks = json::array();
    for (const auto& e : plan.ranks) {
        ranks.push_back(json{{"layer", e.layer}, {"rank", e.rank}, {"skip", e.skip}});
    }
    j["ranks"] = std::move(ranks);
    return j;
}

} // namespace

std::string plan_to_json(const FactorizationPlan& plan) {
    return plan_json(plan).dump(2) + "\n";
}

FactorizationPlan plan_from_json(const std::string& text) {
    const json j = parse(text, "plan");
    FactorizationPlan plan;
    plan.switch_epoch = j.at("switch_epoch");
    plan.prefix_k = j.at("K");
    if (j.contains("estimator")) plan.estimator = estimator_from_json(j.at("estimator"));
    for (const auto& e : j.at("ranks")) {
        PlanEntry entry;
        entry.layer = e.at("layer");
        entry.rank = e.at("rank");
        entry.skip = e.value("skip", false);
        plan.ranks.push_back(std::move(entry));
    }
    return plan;
}

TrainConfig train_config_from_json(const std::string& text) {
    const json j = parse(text, "train config");
    TrainConfig cfg;
    if (j.contains("total_epochs")) cfg.total_epochs = j.at("total_epochs");
    if (j.contains("batch_size")) cfg.batch_size = j.at("batch_size");
    if (j.contains("learning_rate")) cfg.learning_rate = j.at("learning_rate");
    if (j.contains("momentum")) cfg.momentum = j.at("momentum");
    if (j.contains("decay")) {
        const auto& d = j.at("decay");
        if (d.contains("lambda")) cfg.decay.lambda = d.at("lambda");
        if (d.contains("mode")) {
            cfg.decay.scheme = decay_scheme_from_name(d.at("mode"));
        }
    }
    if (j.contains("lr_milestones")) {
        cfg.lr_milestones.clear();
        for (const auto& m : j.at("lr_milestones")) {
            LrMilestone ms;
            if (m.is_array()) {
                ms.epoch = m.at(0);
                ms.multiplier = m.at(1);
            } else {
                ms.epoch = m.at("epoch");
                ms.multiplier = m.at("multiplier");
            }
            cfg.lr_milestones.push_back(ms);
        }
    }
    if (j.contains("switch_lr_multiplier")) {
        cfg.switch_lr_multiplier = j.at("switch_lr_multiplier");
    }
    if (j.contains("seed")) cfg.seed = j.at("seed");
    if (j.contains("stabilization")) {
        const auto& s = j.at("stabilization");
        if (s.contains("epsilon")) cfg.stabilization.epsilon = s.at("epsilon");
        if (s.contains("window")) cfg.stabilization.window = s.at("window");
        if (s.contains("min_epochs")) cfg.stabilization.min_epochs = s.at("min_epochs");
    }
    if (j.contains("estimator")) cfg.estimator = estimator_from_json(j.at("estimator"));
    for (const char* key : {"forced_E", "forced_e"}) {
        if (j.contains(key) && !j.at(key).is_null()) {
            cfg.forced_e = j.at(key).get<count>();
        }
    }
    return cfg;
}

std::string train_config_to_json(const TrainConfig& cfg) {
    json j;
    j["total_epochs"] = cfg.total_epochs;
    j["batch_size"] = cfg.batch_size;
    j["learning_rate"] = cfg.learning_rate;
    j["momentum"] = cfg.momentum;
    j["decay"] = json{{"lambda", cfg.decay.lambda},
                      {"mode", decay_scheme_name(cfg.decay.scheme)}};
    json ms = json::array();
    for (const auto& m : cfg.lr_milestones) {
        ms.push_back(json::array({m.epoch, m.multiplier}));
    }
    j["lr_milestones"] = std::move(ms);
    j["switch_lr_multiplier"] = cfg.switch_lr_multiplier;
    j["seed"] = cfg.seed;
    j["stabilization"] = json{{"epsilon", cfg.stabilization.epsilon},
                              {"window", cfg.stabilization.window},
                              {"min_epochs", cfg.stabilization.min_epochs}};
    j["estimator"] = json{{"mode", rank_mode_name(cfg.estimator.mode)},
                          {"accum_fraction", cfg.estimator.accum_fraction}};
    j["forced_E"] = cfg.forced_e ? json(*cfg.forced_e) : json(nullptr);
    return j.dump(2) + "\n";
}

ModelSpec model_spec_from_json(const std::string& text, Shape3 input,
                               count num_classes) {
    const json j = parse(text, "model spec");
    ModelSpec spec;
    spec.input = input;
    spec.num_classes = num_classes;
    for (const auto& l : j.at("layers")) {
        const std::string type = l.at("type");
        if (type == "flatten") continue; // implicit in the activation layout
        LayerDesc d;
        if (type == "dense") {
            d.kind = LayerKind::dense;
        } else if (type == "conv") {
            d.kind = LayerKind::conv;
            d.kernel = l.at("kernel");
            d.padding = l.value("padding", -1);
        } else {
            throw InvalidInput("unknown layer type: " + type);
        }
        d.out = l.at("out");
        d.relu = l.value("relu", true);
        d.bias = l.value("bias", true);
        spec.hidden.push_back(d);
    }
    return spec;
}

std::string report_to_json(const TrainReport& report) {
    json j;
    j["prefix_k"] = report.prefix_k;
    j["switch_epoch"] = report.switch_epoch ? json(*report.switch_epoch) : json(nullptr);
    j["switch_forced"] = report.switch_forced;
    j["fallback_used"] = report.fallback_used;
    j["params_full_rank"] = report.params_full_rank;
    j["params_low_rank"] = report.params_low_rank;
    j["final_accuracy"] = report.final_accuracy;
    json epochs = json::array();
    for (const auto& e : report.epochs) {
        epochs.push_back(json{{"epoch", e.epoch},
                              {"phase", e.phase},
                              {"loss", e.loss},
                              {"accuracy", e.accuracy},
                              {"learning_rate", e.learning_rate}});
    }
    j["epochs"] = std::move(epochs);
    j["plan"] = plan_json(report.plan);
    return j.dump(2) + "\n";
}

std::string profile_result_to_json(const ProfileResult& result) {
    json j;
    json stacks = json::array();
    for (const auto& s : result.stacks) {
        stacks.push_back(json{{"id", s.id},
                              {"l_beg", s.l_beg},
                              {"l_end", s.l_end},
                              {"avg_full_ms", s.avg_full_ms},
                              {"avg_low_ms", s.avg_low_ms},
                              {"speedup", s.speedup}});
    }
    j["stacks"] = std::move(stacks);
    j["K_hat"] = result.k_hat;
    j["upsilon"] = result.upsilon;
    j["rho_bar"] = result.rho_bar;
    j["tau"] = result.tau;
    return j.dump(2) + "\n";
}

std::string read_text_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path);
    return std::string((std::istreambuf_iterator<char>(f)),
                       std::istreambuf_iterator<char>());
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open for writing: " + path);
    f.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!f) throw IoError("write failed: " + path);
}

} // namespace lrt
