#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "softshield/corpus.hpp"
#include "softshield/model.hpp"
#include "softshield/tensor.hpp"

namespace softshield {

// Trainable virtual-token embeddings prepended to the model input. The
// base model never changes; this matrix is the whole defense.
struct SoftPrompt {
  Tensor matrix;      // m x d_model
  std::string label;  // "generic", "fused" or an attack kind
  int trained_steps = 0;
  std::string config_hash;  // of the model it was trained against

  int m() const { return matrix.rows(); }
  int d() const { return matrix.cols(); }
};

struct ShieldHyper {
  enum class Init { text, gaussian };
  float learning_rate = 1e-2f;
  int steps = 2000;
  int batch_size = 16;
  float clean_mix = 0.5f;  // share of clean->clean pairs per batch
  uint64_t seed = 0;
  Init init_mode = Init::text;
};

// Text mode copies token embeddings of a fixed instruction string into the
// leading rows (Gaussian fill past its end); gaussian mode draws every row.
SoftPrompt init_soft_prompt(int m, const Parameters& params, ShieldHyper::Init init_mode,
                            uint64_t seed);

// Adam on the prompt matrix only; params must be frozen (untracked) and are
// bit-identical afterwards. Batches mix clean_mix clean pairs with
// corrupted->clean pairs. kind_filter restricts training to one attack kind
// (specialist prompts). Returns the per-step loss log.
std::vector<float> train_soft_prompt(const Parameters& params, SoftPrompt& prompt,
                                     const std::vector<Quadruple>& quads,
                                     const ShieldHyper& hyper,
                                     std::optional<AttackKind> kind_filter = std::nullopt,
                                     const StepCallback& on_step = {});

// Row-wise concatenation in the given order; label "fused". If
// context_limit > 0 the combined length is checked against it.
SoftPrompt fuse(const std::vector<SoftPrompt>& prompts, int context_limit = 0);
// Element-wise mean of equal-shape prompts; the alternative fusion rule.
SoftPrompt fuse_mean(const std::vector<SoftPrompt>& prompts);

// ---- threat-kind router ----

inline constexpr int kRouterFeatures = 4096;
// Class order is fixed; ties in argmax resolve to the earliest class.
inline constexpr int kRouterClasses = 4;
inline constexpr std::array<const char*, 4> kRouterClassNames = {"clean", "direct",
                                                                 "indirect", "jailbreak"};

// L2-normalized counts of byte bigrams hashed into kRouterFeatures bins;
// empty and single-byte text map to the zero vector.
std::vector<float> featurize(std::string_view text);

struct RouterExample {
  std::string text;
  int cls;  // index into kRouterClassNames
};

struct RouterHyper {
  float learning_rate = 2.0f;
  int steps = 300;
  uint64_t seed = 0;
  float holdout_fraction = 0.1f;
};

struct Router {
  std::vector<float> weight;  // kRouterClasses x kRouterFeatures, row-major
  std::vector<float> bias;    // kRouterClasses
  double held_out_accuracy = 0.0;

  std::array<double, kRouterClasses> class_probs(std::string_view text) const;
  int predict(std::string_view text) const;
};

// Multinomial logistic regression by full-batch gradient descent from zero
// weights; all four classes must be present.
Router train_router(const std::vector<RouterExample>& examples, const RouterHyper& hyper);

// argmax class; "clean" yields nullptr (no prompt prepended), otherwise the
// registered specialist for the predicted kind.
const SoftPrompt* route(const Router& router, std::string_view text,
                        const std::map<AttackKind, SoftPrompt>& registry);

}  // namespace softshield
