#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "psn/tensor.hpp"

namespace psn {

enum class LayerKind { Conv, Relu, BatchNorm, TransposedConv };
enum class Mode { Train, Infer };

struct LayerSpec {
    LayerKind kind = LayerKind::Conv;
    int in_channels = 1;
    int out_channels = 1;
    int kernel_size = 3;   // odd for conv; 4 for stride-2 transposed conv
    int stride = 1;

    void validate() const;
};

// Named parameter tensors plus Adam optimizer state.
// Parameter names: <prefix>.w / .b (conv, tconv),
// <prefix>.gamma / .shift / .rmean / .rvar (batchnorm).
struct ParamStore {
    std::map<std::string, Tensor> values;
    std::vector<std::string> trainable;   // keys that receive Adam updates
    std::map<std::string, Tensor> adam_m;
    std::map<std::string, Tensor> adam_v;
    long step = 0;

    Tensor& get(const std::string& key);
    const Tensor& get(const std::string& key) const;
    void add(const std::string& key, Tensor t, bool is_trainable);
};

using GradStore = std::map<std::string, Tensor>;
void accumulate_grad(GradStore& grads, const std::string& key, const Tensor& g);

struct TrainConfig {
    real learning_rate = 1e-3;
    real beta1 = 0.9;
    real beta2 = 0.999;
    real epsilon_adam = 1e-8;
    int epochs = 30;
    int batch_size = 16;
    std::uint64_t seed = 0;
    int lr_decay_every = 20;   // halve lr every this many epochs
    real lr_decay = 0.5;

    void validate() const;
};

struct LayerCache {
    Tensor input;
    // batchnorm extras (train mode)
    std::vector<real> mean;
    std::vector<real> inv_std;
    Tensor xhat;
};

constexpr real kBnMomentum = 0.9;
constexpr real kBnEpsilon = 1e-5;

// Forward through one layer. In Train mode batchnorm uses batch statistics;
// running stats are updated only when update_running is set (gradient checks
// need repeatable train-mode forwards).
Tensor layer_forward(const LayerSpec& spec, ParamStore& params, const std::string& prefix,
                     const Tensor& x, Mode mode, LayerCache* cache = nullptr,
                     bool update_running = false);

Tensor layer_backward(const LayerSpec& spec, const ParamStore& params, const std::string& prefix,
                      const LayerCache& cache, const Tensor& grad_out, GradStore& grads,
                      Mode mode = Mode::Train);

// Registers He-initialized parameters for the layer under `prefix`.
void init_layer_params(const LayerSpec& spec, ParamStore& params, const std::string& prefix,
                       std::uint64_t seed);

void adam_step(ParamStore& params, const GradStore& grads, const TrainConfig& config,
               real lr_override = -1.0);

// Round every entry to the nearest 32-bit float value (checkpoint precision).
void snap_to_f32(Tensor& t);

// Seeded N(0,1) stream used by initializers.
class NormalSampler {
public:
    explicit NormalSampler(std::uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ULL) {}
    real next();

private:
    std::uint64_t next_u64();
    std::uint64_t state_;
    bool have_spare_ = false;
    real spare_ = 0;
};

}  // namespace psn
