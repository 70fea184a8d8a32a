#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "psn/degrade.hpp"
#include "psn/neural.hpp"
#include "psn/prox.hpp"
#include "psn/tensor.hpp"

namespace psn {

struct PsnConfig {
    int stages = 3;
    real beta = 8.0;
    int scales = 2;          // pyramid levels
    int block_depth = 4;     // conv layers per Proximal Block
    int channels = 16;
    int input_channels = 1;
    TaskKind task = TaskKind::Denoise;
    int sr_scale = 1;        // 2 for 2x super-resolution
    bool residual_skip = true;
    real sigma_known = -1;   // fixed training noise level (PSN-K), <0 if unset
    real sigma_lo = 0;       // PSN-U training range
    real sigma_hi = 0;

    void validate() const;
    std::string to_text() const;
    static PsnConfig from_text(const std::string& text);
};

// Ordered per-stage, per-scale Proximal Block parameters plus the
// learned upsampling blocks. Stage parameters are never shared across stages.
struct PsnModel {
    PsnConfig config;
    ParamStore params;

    std::vector<LayerSpec> block_layer_specs() const;
    static std::string block_prefix(int scale, int stage, int layer);
    static std::string up_prefix(int scale);  // upsampler feeding this scale
    LayerSpec up_spec() const;
};

PsnModel init_psn_model(const PsnConfig& cfg, std::uint64_t seed);

struct BlockCache {
    Tensor input;
    std::vector<LayerCache> layers;
};

struct StageTrace {
    BlockCache block;
    Tensor v;
    Tensor x;
};

struct ScaleTrace {
    Tensor scale_input;            // x0 at this scale (plus merged coarse estimate)
    LayerCache up_cache;           // transposed-conv cache (scales > own)
    std::vector<StageTrace> stages;
};

struct PsnTrace {
    std::vector<ScaleTrace> scales;    // index 0 = finest
    std::vector<Tensor> outputs;       // finest first, matches target pyramid order
};

// One HQS iteration with the learned prox: v_t = block(x_prev), x_t = fidelity step.
std::pair<Tensor, Tensor> proximal_block_forward(PsnModel& model, int scale, int stage,
                                                 const Tensor& x_prev, const Tensor& y,
                                                 const Kernel& k, real beta, Mode mode,
                                                 BlockCache* cache = nullptr,
                                                 bool update_running = false);

// Coarse-to-fine multi-scale forward. `y` is the full-resolution working
// input (the noisy image, or the bicubically upsampled low-res image).
// Returns per-scale outputs ordered finest first; outputs.front() is x_S.
std::vector<Tensor> psn_forward(PsnModel& model, const Tensor& y, const Kernel& k, Mode mode,
                                PsnTrace* trace = nullptr, bool update_running = false);

struct LossResult {
    real value = 0;
    std::vector<Tensor> grads;  // per output, finest first
};

// Sum of per-level MSE against the target pyramid, equal weights.
LossResult multiscale_loss(const std::vector<Tensor>& outputs, const Tensor& x_gt);

// Accumulates parameter gradients for multiscale_loss(psn_forward(...)).
void psn_backward(PsnModel& model, const PsnTrace& trace, const std::vector<Tensor>& out_grads,
                  const Kernel& k, GradStore& grads);

// Learned per-stage prox for the generic HQS solver (inference mode).
class LearnedProx : public ProxOperator {
public:
    LearnedProx(PsnModel& model, int scale = 0) : model_(&model), scale_(scale) {}
    Tensor apply(const Tensor& x, int stage) const override;

private:
    PsnModel* model_;
    int scale_;
};

struct TrainResult {
    std::vector<real> loss_curve;  // mean loss per epoch
};

struct TrainDataset {
    std::vector<Tensor> patches;  // clean 1xCxPxP patches
};

TrainResult train_psn(PsnModel& model, const TrainDataset& dataset, const TrainConfig& tc);

// Single forward-pass recovery; output clipped to [0,1].
Tensor restore(PsnModel& model, const Tensor& y, const DegradationSpec& spec);

enum class SpecialCase { Vdsr, Dncnn };
PsnConfig make_special_case_config(SpecialCase which);

// Kernel used by the solver for a given task: delta for denoising,
// separable bicubic lowpass at the SR scale for super-resolution.
Kernel solver_kernel(const PsnConfig& cfg);

// Initial full-resolution estimate from the measurement.
Tensor initial_estimate(const Tensor& y, const DegradationSpec& spec);

}  // namespace psn
