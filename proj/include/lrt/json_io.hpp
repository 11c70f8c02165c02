#ifndef LRT_JSON_IO_HPP
#define LRT_JSON_IO_HPP

#include <string>

#include "lrt/profiler.hpp"
#include "lrt/trainer.hpp"

namespace lrt {

/// Plan document: {switch_epoch, K, estimator:{mode,p}, ranks:[{layer,
/// rank, skip}]} — field names are part of the format.
std::string plan_to_json(const FactorizationPlan& plan);
FactorizationPlan plan_from_json(const std::string& text);

/// TrainConfig document with snake_case keys (total_epochs, batch_size,
/// learning_rate, momentum, decay{lambda,mode}, lr_milestones,
/// switch_lr_multiplier, seed, stabilization{epsilon,window,min_epochs},
/// estimator{mode,accum_fraction}, forced_E). Missing keys keep defaults.
TrainConfig train_config_from_json(const std::string& text);
std::string train_config_to_json(const TrainConfig& config);

/// Hidden-layer list; the classifier layer is appended by the builder.
/// {"layers":[{"type":"dense","out":256}, {"type":"conv","out":16,
/// "kernel":3,"padding":1}, ...]}
ModelSpec model_spec_from_json(const std::string& text, Shape3 input,
                               count num_classes);

std::string report_to_json(const TrainReport& report);

/// {stacks:[{id, l_beg, l_end, avg_full_ms, avg_low_ms, speedup}], K_hat,
/// upsilon, rho_bar, tau}
std::string profile_result_to_json(const ProfileResult& result);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

} // namespace lrt

#endif
