#ifndef LRT_FACTORIZER_HPP
#define LRT_FACTORIZER_HPP

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "lrt/model.hpp"
#include "lrt/rank_metrics.hpp"
#include "lrt/rank_trajectory.hpp"
#include "lrt/svd.hpp"

namespace lrt {

/// Truncated spectral split of one weight matrix: w ~ u * v_t with the
/// singular values divided evenly between the factors (u = U sigma^{1/2},
/// v_t = sigma^{1/2} V^T), so ||u||_F = ||v_t||_F.
struct FactorizedPair {
    enum class Origin { dense, conv };

    DenseMatrix u;   // m_eff x r
    DenseMatrix v_t; // r x n
    count rank = 0;
    Origin origin = Origin::dense;
    count conv_in = 0, conv_out = 0, conv_kernel = 0; // conv origin only
};

/// One planned layer: target rank plus a skip flag for layers where the
/// pair would not be smaller than the original matrix.
struct PlanEntry {
    std::string layer;
    count rank = 0;
    bool skip = false;
};

/// The discovered schedule (E, K, R): switch epoch, unfactorized prefix
/// length, per-layer ranks. Layers with index <= K and the last layer never
/// appear in `ranks`.
struct FactorizationPlan {
    count switch_epoch = 0;
    count prefix_k = 1;
    RankEstimatorConfig estimator;
    std::vector<PlanEntry> ranks;

    const PlanEntry* find(const std::string& layer) const;
};

/// Unrolls the 4-D kernel to a (m*k^2, n) matrix whose column j is the
/// vectorized filter j; vectorization order is (input-channel, kernel-row,
/// kernel-col) fastest-last. roll_conv is the exact inverse.
DenseMatrix unroll_conv(const ConvKernel& kernel);
ConvKernel roll_conv(const DenseMatrix& unrolled, count in_channels,
                     count out_channels, count kernel);

FactorizedPair spectral_factorize(const DenseMatrix& w, count r);

/// Conv-origin variant carrying the reshape metadata.
FactorizedPair spectral_factorize_conv(const DenseMatrix& unrolled, count r,
                                       count in_channels, count out_channels,
                                       count kernel);

/// Splits a conv-origin pair into the replacement kernels: a thin conv with
/// r filters of shape (m, k, k) followed by a 1x1 projection with n outputs.
std::pair<ConvKernel, ConvKernel> reshape_to_conv(const FactorizedPair& pair);

/// True iff a rank-r pair strictly reduces parameters: r(m_eff + n) < m_eff*n.
bool break_even(count rows, count cols, count r);

/// Ranks for every candidate layer (K < index < L) from the spectra read at
/// the switch epoch; layers failing break-even get skip = true.
FactorizationPlan build_plan(const HybridModel& model,
                             std::span<const RankTrajectory> trajectories,
                             const std::map<std::string, std::vector<double>>& spectra,
                             count prefix_k, count switch_epoch,
                             const RankEstimatorConfig& estimator);

/// Replaces every non-skipped planned layer by its truncated pair. The
/// layer bias stays attached to the v_t stage; forward shapes are unchanged.
void apply_plan(HybridModel& model, const FactorizationPlan& plan);

} // namespace lrt

#endif
