#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "softshield/tensor.hpp"
#include "softshield/tokenizer.hpp"

namespace softshield {

struct ModelConfig {
  int n_layers = 2;
  int d_model = 64;
  int n_heads = 4;
  int d_ff = 256;
  int context_len = 256;
  int vocab_size = kVocabSize;

  void validate() const;
  // Stable 16-hex-digit digest of the config fields; recorded in soft prompt
  // checkpoints and evaluation reports.
  std::string hash() const;
  bool operator==(const ModelConfig&) const = default;
};

struct LayerParams {
  Tensor ln1_gain, ln1_bias;
  Tensor wq, wk, wv, wo;
  Tensor ln2_gain, ln2_bias;
  Tensor w1, w2;
};

// All weights of the decoder-only model. The unembedding is tied to the
// token embedding, so logits = final_hidden . tok_embed^T.
struct Parameters {
  ModelConfig config;
  Tensor tok_embed;  // vocab x d
  Tensor pos_embed;  // context_len x d
  std::vector<LayerParams> layers;
  Tensor lnf_gain, lnf_bias;

  // (name, tensor) pairs sorted by name; the checkpoint order.
  std::vector<std::pair<std::string, Tensor*>> named();
  std::vector<std::pair<std::string, const Tensor*>> named() const;
  void set_tracked(bool tracked);
  bool any_tracked() const;
  int64_t param_count() const;
};

struct TextPair {
  std::string prompt;
  std::string answer;
};

struct Hyper {
  float learning_rate = 3e-4f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
  int batch_size = 32;
  int steps = 3000;
  uint64_t seed = 0;
  float grad_clip_norm = 1.0f;
};

Parameters init_params(const ModelConfig& config, uint64_t seed);

// Logits for [soft rows + embedded ids]; rows = soft.m + ids.size().
// `soft` is the m x d matrix of a soft prompt, or nullptr for none.
Tensor forward(const Parameters& params, std::span<const int> ids,
               const Tensor* soft = nullptr);

// Teacher-forced loss on [soft + BOS + prompt + SEP + answer + EOS], masked
// so only the answer tokens and the trailing EOS are predicted.
Tensor loss_on_example(const Parameters& params, std::span<const int> prompt_ids,
                       std::span<const int> answer_ids, const Tensor* soft = nullptr);

// Greedy decoding from [soft + BOS + prompt + SEP]; stops at EOS or after
// max_new tokens; ties break toward the lowest token id; specials are
// excluded from the returned ids.
std::vector<int> generate(const Parameters& params, std::span<const int> prompt_ids,
                          const Tensor* soft = nullptr, int max_new = 64);

// exp(mean -log p(id_t | prefix)) over all positions of [BOS + ids].
double perplexity(const Parameters& params, std::span<const int> ids);

// Adam over all parameters on loss_on_example batches; updates `params` in
// place and returns the per-step loss log.
using StepCallback = std::function<void(int step, float loss)>;
std::vector<float> pretrain(Parameters& params, const std::vector<TextPair>& corpus,
                            const Hyper& hyper, const StepCallback& on_step = {});

// ---- optimizer (shared with soft prompt training) ----

class Adam {
 public:
  Adam(std::vector<Tensor> params, float learning_rate, float beta1 = 0.9f,
       float beta2 = 0.999f, float eps = 1e-8f);
  // Applies one update from the accumulated gradients (missing grads count
  // as zero), then advances the bias-correction step.
  void step();
  void zero_grad();

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<float>> m_, v_;
  float lr_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
};

// Global L2 norm of all gradient accumulators (absent grads count as zero).
double grad_norm(const std::vector<Tensor>& params);
// Scales gradients so the global norm is at most max_norm.
void clip_grad_norm(const std::vector<Tensor>& params, float max_norm);

}  // namespace softshield
