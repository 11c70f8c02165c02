#include "lrt/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>

#include "lrt/snapshot.hpp"
#include "lrt/svd.hpp"

namespace lrt {

namespace {

constexpr double kLossCap = 1e6;

double milestone_multiplier(const std::vector<LrMilestone>& milestones,
                            count epoch) {
    double mult = 1.0;
    count best = 0;
    bool found = false;
    for (const auto& m : milestones) {
        if (m.epoch <= epoch && (!found || m.epoch >= best)) {
            best = m.epoch;
            mult = m.multiplier;
            found = true;
        }
    }
    return mult;
}

void sgd_update(std::vector<double>& w, const std::vector<double>& g,
                std::vector<double>& v, double lr, double momentum) {
    for (count i = 0; i < w.size(); ++i) {
        v[i] = momentum * v[i] + g[i];
        w[i] -= lr * v[i];
    }
}

void validate(const TrainConfig& cfg) {
    if (cfg.total_epochs < 1) throw InvalidInput("total_epochs must be >= 1");
    if (cfg.batch_size < 1) throw InvalidInput("batch_size must be >= 1");
    if (cfg.learning_rate <= 0.0) throw InvalidInput("learning_rate must be > 0");
    if (cfg.momentum < 0.0 || cfg.momentum >= 1.0) {
        throw InvalidInput("momentum must be in [0, 1)");
    }
    for (const auto& m : cfg.lr_milestones) {
        if (m.multiplier <= 0.0) throw InvalidInput("lr multipliers must be > 0");
    }
    if (cfg.switch_lr_multiplier <= 0.0) {
        throw InvalidInput("switch_lr_multiplier must be > 0");
    }
    if (cfg.stabilization.epsilon <= 0.0) throw InvalidInput("epsilon must be > 0");
    if (cfg.stabilization.window < 1) throw InvalidInput("window must be >= 1");
}

double wall_seconds() {
    const auto t = std::chrono::steady_clock::now().time_since_epoch();
    return std::chrono::duration<double>(t).count();
}

} // namespace

double forward_backward(HybridModel& model, const DenseMatrix& x,
                        std::span<const count> labels) {
    ForwardContext ctx;
    const DenseMatrix logits = forward(model, x, &ctx);
    DenseMatrix dlogits;
    const double loss = softmax_cross_entropy(logits, labels, &dlogits);
    if (!std::isfinite(loss)) {
        throw DivergenceError("loss is not finite");
    }
    zero_gradients(model);
    backward(model, ctx, dlogits);
    return loss;
}

void add_decay_gradients(HybridModel& model, const DecayConfig& decay) {
    if (decay.scheme == DecayScheme::none || decay.lambda == 0.0) return;
    for (auto& l : model.layers) {
        if (!l.factorized) {
            for (count i = 0; i < l.w.size(); ++i) {
                l.gw.storage()[i] += decay.lambda * l.w.storage()[i];
            }
        } else if (decay.scheme == DecayScheme::frobenius) {
            auto [gu, gvt] = frobenius_decay_grads(l.u, l.v_t, decay.lambda);
            for (count i = 0; i < gu.size(); ++i) {
                l.gu.storage()[i] += gu.storage()[i];
            }
            for (count i = 0; i < gvt.size(); ++i) {
                l.gv_t.storage()[i] += gvt.storage()[i];
            }
        } else {
            for (count i = 0; i < l.u.size(); ++i) {
                l.gu.storage()[i] += decay.lambda * l.u.storage()[i];
            }
            for (count i = 0; i < l.v_t.size(); ++i) {
                l.gv_t.storage()[i] += decay.lambda * l.v_t.storage()[i];
            }
        }
    }
}

void sgd_step(HybridModel& model, double lr, double momentum) {
    for (auto& l : model.layers) {
        if (l.factorized) {
            sgd_update(l.u.storage(), l.gu.storage(), l.vu.storage(), lr, momentum);
            sgd_update(l.v_t.storage(), l.gv_t.storage(), l.vv_t.storage(), lr,
                       momentum);
        } else {
            sgd_update(l.w.storage(), l.gw.storage(), l.vw.storage(), lr, momentum);
        }
        if (!l.bias.empty()) {
            sgd_update(l.bias, l.gbias, l.vbias, lr, momentum);
        }
    }
}

double evaluate(const HybridModel& model, const DenseMatrix& x,
                std::span<const count> labels) {
    if (x.rows() == 0) throw InvalidInput("evaluate on an empty dataset");
    if (labels.size() != x.rows()) throw ShapeError("label count != sample count");
    constexpr count kChunk = 512;
    count correct = 0;
    for (count start = 0; start < x.rows(); start += kChunk) {
        const count n = std::min(kChunk, x.rows() - start);
        DenseMatrix chunk(n, x.cols());
        std::copy_n(x.data() + start * x.cols(), n * x.cols(), chunk.data());
        const DenseMatrix logits = forward(model, chunk, nullptr);
        for (count i = 0; i < n; ++i) {
            const double* row = logits.data() + i * logits.cols();
            count best = 0;
            for (count c = 1; c < logits.cols(); ++c) {
                if (row[c] > row[best]) best = c; // ties keep the lowest index
            }
            if (best == labels[start + i]) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(x.rows());
}

TrainOutput train_adaptive(const ModelSpec& spec, const Dataset& data,
                           const TrainConfig& cfg, Clock* profile_clock,
                           const std::string& snapshot_dir) {
    validate(cfg);
    const count T = cfg.total_epochs;

    Rng rng_init(cfg.seed);
    Rng rng_epoch(cfg.seed ^ 0x9E3779B97F4A7C15ULL);
    Rng rng_profile(cfg.seed ^ 0xD1B54A32D192ED03ULL);

    TrainOutput out;
    out.model = build_model(spec, rng_init);
    HybridModel& model = out.model;
    TrainReport& report = out.report;
    const count L = model.weight_layer_count();
    report.params_full_rank = param_count(model);
    report.params_low_rank = report.params_full_rank;

    // Profiling decides the unfactorized prefix once, before epoch 0.
    count k_hat = 1;
    const auto stacks = stacks_from_model(model, cfg.batch_size);
    if (!stacks.empty()) {
        WallClock wall;
        Clock& clock = profile_clock ? *profile_clock : static_cast<Clock&>(wall);
        k_hat = select_k(model, stacks, ProfilerConfig{}, clock, rng_profile).k_hat;
    }
    report.prefix_k = k_hat;

    // All layers are tracked for reporting; the stabilization test only
    // gates on the candidates (K < index < L).
    std::vector<RankTrajectory>& trajs = out.trajectories;
    std::map<std::string, std::vector<double>> spectra;
    auto record_version = [&](count version) {
        for (count i = 0; i < L; ++i) {
            const Layer& l = model.layers[i];
            std::vector<double> sigma = singular_values(l.w);
            const double sr = stable_rank(sigma);
            if (version == 0) {
                const double xi = static_cast<double>(l.full_rank()) / sr;
                trajs.emplace_back(l.name, xi, l.full_rank());
            }
            trajs[i].append(version, sr);
            spectra[l.name] = std::move(sigma);
        }
        if (!snapshot_dir.empty()) {
            char name[32];
            std::snprintf(name, sizeof(name), "epoch_%04zu.cfsnap",
                          static_cast<std::size_t>(version));
            write_snapshot((std::filesystem::path(snapshot_dir) / name).string(),
                           version, model_to_records(model));
        }
    };
    if (!snapshot_dir.empty()) {
        std::filesystem::create_directories(snapshot_dir);
    }
    record_version(0);

    SwitchDetector detector(cfg.stabilization);
    std::optional<count> boundary; // number of full-rank epochs before the switch
    const bool forced = cfg.forced_e.has_value();
    if (forced) {
        boundary = std::min(*cfg.forced_e, T);
        report.switch_forced = true;
    }

    bool switched = false;    // switch attempted; rank tracking stops here
    bool went_low_rank = false; // at least one layer actually factorized
    auto do_switch = [&](count version) {
        report.plan = build_plan(model, trajs, spectra, k_hat, version,
                                 cfg.estimator);
        apply_plan(model, report.plan);
        report.switch_epoch = version;
        report.params_low_rank = param_count(model);
        switched = true;
        for (const auto& e : report.plan.ranks) {
            if (!e.skip) went_low_rank = true;
        }
    };
    if (boundary && *boundary == 0) do_switch(0);

    auto candidates = [&]() {
        std::vector<RankTrajectory> c;
        for (count idx = k_hat + 1; idx < L; ++idx) c.push_back(trajs[idx - 1]);
        return c;
    };

    const count n_train = data.train_x.rows();
    std::vector<count> order(n_train);
    for (count i = 0; i < n_train; ++i) order[i] = i;
    const count d = data.train_x.cols();

    for (count epoch = 0; epoch < T; ++epoch) {
        const double t0 = wall_seconds();
        const bool low_rank_phase = went_low_rank;
        const double lr = cfg.learning_rate * milestone_multiplier(cfg.lr_milestones, epoch) *
                          (low_rank_phase ? cfg.switch_lr_multiplier : 1.0);

        rng_epoch.shuffle(order);
        double loss_sum = 0.0;
        count seen = 0;
        for (count start = 0; start < n_train; start += cfg.batch_size) {
            const count n = std::min(cfg.batch_size, n_train - start);
            DenseMatrix bx(n, d);
            std::vector<count> by(n);
            for (count i = 0; i < n; ++i) {
                std::copy_n(data.train_x.data() + order[start + i] * d, d,
                            bx.data() + i * d);
                by[i] = data.train_y[order[start + i]];
            }
            double loss;
            try {
                loss = forward_backward(model, bx, by);
            } catch (const DivergenceError& e) {
                throw TrainingDiverged(e.what(), report);
            }
            if (loss > kLossCap) {
                throw TrainingDiverged("loss exceeded divergence cap", report);
            }
            add_decay_gradients(model, cfg.decay);
            sgd_step(model, lr, cfg.momentum);
            loss_sum += loss * static_cast<double>(n);
            seen += n;
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.phase = low_rank_phase ? "low_rank" : "full_rank";
        rec.loss = loss_sum / static_cast<double>(seen);
        rec.accuracy = evaluate(model, data.val_x, data.val_y);
        rec.learning_rate = lr;
        report.epochs.push_back(rec);
        (low_rank_phase ? report.wall_seconds_low_rank
                        : report.wall_seconds_full_rank) += wall_seconds() - t0;

        if (switched) continue;
        const count version = epoch + 1;
        record_version(version);
        if (!forced && !boundary) {
            boundary = detector.observe(candidates());
            if (!boundary && version == T - 1) {
                // Never stabilized in time: switch before the final epoch so
                // the run still finishes in low-rank form.
                boundary = T - 1;
                report.fallback_used = true;
            }
        }
        if (boundary && version == *boundary) do_switch(version);
    }

    report.final_accuracy = evaluate(model, data.val_x, data.val_y);
    return out;
}

} // namespace lrt
