#include "softshield/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace softshield {

void ModelConfig::validate() const {
  if (n_layers < 1 || d_model < 1 || n_heads < 1 || d_ff < 1 || context_len < 1) {
    throw ConfigError("model config extents must be positive");
  }
  if (d_model % n_heads != 0) {
    throw ConfigError("d_model " + std::to_string(d_model) +
                      " not divisible by n_heads " + std::to_string(n_heads));
  }
  if (vocab_size != kVocabSize) {
    throw ConfigError("vocab_size must be " + std::to_string(kVocabSize));
  }
}

std::string ModelConfig::hash() const {
  const std::string canon = "context_len=" + std::to_string(context_len) +
                            ";d_ff=" + std::to_string(d_ff) +
                            ";d_model=" + std::to_string(d_model) +
                            ";n_heads=" + std::to_string(n_heads) +
                            ";n_layers=" + std::to_string(n_layers) +
                            ";vocab_size=" + std::to_string(vocab_size);
  uint64_t h = fnv1a64(canon);
  static const char* hex = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = hex[h & 0xf];
    h >>= 4;
  }
  return out;
}

std::vector<std::pair<std::string, Tensor*>> Parameters::named() {
  std::vector<std::pair<std::string, Tensor*>> out;
  out.emplace_back("embed.pos", &pos_embed);
  out.emplace_back("embed.tokens", &tok_embed);
  for (size_t i = 0; i < layers.size(); ++i) {
    const std::string p = "layers." + std::to_string(i) + ".";
    out.emplace_back(p + "attn.wk", &layers[i].wk);
    out.emplace_back(p + "attn.wo", &layers[i].wo);
    out.emplace_back(p + "attn.wq", &layers[i].wq);
    out.emplace_back(p + "attn.wv", &layers[i].wv);
    out.emplace_back(p + "ln1.bias", &layers[i].ln1_bias);
    out.emplace_back(p + "ln1.gain", &layers[i].ln1_gain);
    out.emplace_back(p + "ln2.bias", &layers[i].ln2_bias);
    out.emplace_back(p + "ln2.gain", &layers[i].ln2_gain);
    out.emplace_back(p + "mlp.w1", &layers[i].w1);
    out.emplace_back(p + "mlp.w2", &layers[i].w2);
  }
  out.emplace_back("ln_f.bias", &lnf_bias);
  out.emplace_back("ln_f.gain", &lnf_gain);
  std::sort(out.begin(), out.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> Parameters::named() const {
  auto mut = const_cast<Parameters*>(this)->named();
  std::vector<std::pair<std::string, const Tensor*>> out;
  out.reserve(mut.size());
  for (auto& [name, t] : mut) out.emplace_back(name, t);
  return out;
}

void Parameters::set_tracked(bool tracked) {
  for (auto& [name, t] : named()) t->set_tracked(tracked);
}

bool Parameters::any_tracked() const {
  for (auto& [name, t] : named()) {
    if (t->tracked()) return true;
  }
  return false;
}

int64_t Parameters::param_count() const {
  int64_t n = 0;
  for (auto& [name, t] : named()) n += t->size();
  return n;
}

Parameters init_params(const ModelConfig& config, uint64_t seed) {
  config.validate();
  Parameters p;
  p.config = config;
  const int d = config.d_model;

  auto gauss = [&](std::vector<int> shape, const std::string& name) {
    Rng rng(Rng::derive(seed, name));
    return Tensor::gaussian(std::move(shape), rng, 0.02f);
  };
  p.tok_embed = gauss({config.vocab_size, d}, "embed.tokens");
  p.pos_embed = gauss({config.context_len, d}, "embed.pos");
  p.layers.resize(config.n_layers);
  for (int i = 0; i < config.n_layers; ++i) {
    const std::string pre = "layers." + std::to_string(i) + ".";
    LayerParams& l = p.layers[i];
    l.wq = gauss({d, d}, pre + "attn.wq");
    l.wk = gauss({d, d}, pre + "attn.wk");
    l.wv = gauss({d, d}, pre + "attn.wv");
    l.wo = gauss({d, d}, pre + "attn.wo");
    l.w1 = gauss({d, config.d_ff}, pre + "mlp.w1");
    l.w2 = gauss({config.d_ff, d}, pre + "mlp.w2");
    l.ln1_gain = Tensor::full({d}, 1.0f);
    l.ln1_bias = Tensor::zeros({d});
    l.ln2_gain = Tensor::full({d}, 1.0f);
    l.ln2_bias = Tensor::zeros({d});
  }
  p.lnf_gain = Tensor::full({d}, 1.0f);
  p.lnf_bias = Tensor::zeros({d});
  return p;
}

namespace {

// 0 on or below the diagonal, -1e9 above; softmax then zeroes the future.
Tensor causal_mask(int t_len) {
  Tensor m = Tensor::zeros({t_len, t_len});
  for (int i = 0; i < t_len; ++i) {
    float* row = m.data().data() + size_t(i) * t_len;
    for (int j = i + 1; j < t_len; ++j) row[j] = -1e9f;
  }
  return m;
}

}  // namespace

Tensor forward(const Parameters& params, std::span<const int> ids, const Tensor* soft) {
  const ModelConfig& cfg = params.config;
  const int m = soft ? soft->rows() : 0;
  if (soft && soft->cols() != cfg.d_model) {
    throw DimError("soft prompt width " + std::to_string(soft->cols()) +
                   " does not match d_model " + std::to_string(cfg.d_model));
  }
  const int t_len = m + int(ids.size());
  if (t_len < 1) throw ContractError("forward: empty input sequence");
  if (t_len > cfg.context_len) {
    throw LengthError("sequence length " + std::to_string(t_len) +
                      " exceeds context_len " + std::to_string(cfg.context_len));
  }

  Tensor x;
  if (!ids.empty()) {
    x = embed_rows(params.tok_embed, ids);
    if (soft) x = concat_rows(*soft, x);
  } else {
    x = *soft;
  }
  x = add(x, slice_rows(params.pos_embed, 0, t_len));

  const int dh = cfg.d_model / cfg.n_heads;
  const float inv_sqrt_dh = 1.0f / std::sqrt(float(dh));
  const Tensor mask = causal_mask(t_len);

  for (const LayerParams& l : params.layers) {
    Tensor h = layer_norm(x, l.ln1_gain, l.ln1_bias);
    Tensor q = matmul(h, l.wq);
    Tensor k = matmul(h, l.wk);
    Tensor v = matmul(h, l.wv);
    std::vector<Tensor> heads;
    heads.reserve(cfg.n_heads);
    for (int hd = 0; hd < cfg.n_heads; ++hd) {
      Tensor qh = slice_cols(q, hd * dh, (hd + 1) * dh);
      Tensor kh = slice_cols(k, hd * dh, (hd + 1) * dh);
      Tensor vh = slice_cols(v, hd * dh, (hd + 1) * dh);
      Tensor scores = add(scale(matmul_nt(qh, kh), inv_sqrt_dh), mask);
      heads.push_back(matmul(softmax_rows(scores), vh));
    }
    x = add(x, matmul(concat_cols(heads), l.wo));
    Tensor h2 = layer_norm(x, l.ln2_gain, l.ln2_bias);
    x = add(x, matmul(gelu(matmul(h2, l.w1)), l.w2));
  }
  x = layer_norm(x, params.lnf_gain, params.lnf_bias);
  return matmul_nt(x, params.tok_embed);  // tied unembedding
}

Tensor loss_on_example(const Parameters& params, std::span<const int> prompt_ids,
                       std::span<const int> answer_ids, const Tensor* soft) {
  const int m = soft ? soft->rows() : 0;
  std::vector<int> seq;
  seq.reserve(prompt_ids.size() + answer_ids.size() + 3);
  seq.push_back(kBosId);
  seq.insert(seq.end(), prompt_ids.begin(), prompt_ids.end());
  seq.push_back(kSepId);
  seq.insert(seq.end(), answer_ids.begin(), answer_ids.end());
  seq.push_back(kEosId);

  Tensor logits = forward(params, seq, soft);
  const int t_len = m + int(seq.size());
  std::vector<int> targets(t_len, 0);
  std::vector<bool> mask(t_len, false);
  // Row t predicts seq[t - m + 1]; only answer tokens and EOS are scored.
  const int sep_row = m + 1 + int(prompt_ids.size());
  for (int t = sep_row; t < t_len - 1; ++t) {
    targets[t] = seq[size_t(t - m + 1)];
    mask[t] = true;
  }
  return cross_entropy(logits, targets, mask);
}

namespace {

int argmax_lowest(const float* row, int n) {
  int best = 0;
  for (int j = 1; j < n; ++j) {
    if (row[j] > row[best]) best = j;
  }
  return best;
}

}  // namespace

std::vector<int> generate(const Parameters& params, std::span<const int> prompt_ids,
                          const Tensor* soft, int max_new) {
  if (max_new < 1) throw ContractError("generate: max_new must be at least 1");
  const int m = soft ? soft->rows() : 0;
  std::vector<int> ctx;
  ctx.reserve(prompt_ids.size() + 2 + size_t(max_new));
  ctx.push_back(kBosId);
  ctx.insert(ctx.end(), prompt_ids.begin(), prompt_ids.end());
  ctx.push_back(kSepId);
  if (m + int(ctx.size()) > params.config.context_len) {
    throw LengthError("prompt of length " + std::to_string(ctx.size()) +
                      " plus soft prompt does not fit context_len " +
                      std::to_string(params.config.context_len));
  }

  std::vector<int> out;
  for (int step = 0; step < max_new; ++step) {
    if (m + int(ctx.size()) + 1 > params.config.context_len) break;
    Tensor logits = forward(params, ctx, soft);
    const int t_len = logits.rows();
    const float* last = logits.data().data() + size_t(t_len - 1) * logits.cols();
    const int next = argmax_lowest(last, logits.cols());
    if (next == kEosId) break;
    ctx.push_back(next);
    if (next < 256) out.push_back(next);
  }
  return out;
}

double perplexity(const Parameters& params, std::span<const int> ids) {
  if (ids.empty()) throw ContractError("perplexity: empty token list");
  std::vector<int> seq;
  seq.reserve(ids.size() + 1);
  seq.push_back(kBosId);
  seq.insert(seq.end(), ids.begin(), ids.end());

  Tensor logits = forward(params, seq);
  const int vocab = logits.cols();
  double nll = 0.0;
  for (size_t t = 0; t < ids.size(); ++t) {
    const float* row = logits.data().data() + t * vocab;
    float mx = row[0];
    for (int j = 1; j < vocab; ++j) mx = std::max(mx, row[j]);
    double denom = 0.0;
    for (int j = 0; j < vocab; ++j) denom += std::exp(double(row[j]) - mx);
    nll += std::log(denom) + mx - row[ids[t]];
  }
  return std::exp(nll / double(ids.size()));
}

// ---------------------------------------------------------------- training

Adam::Adam(std::vector<Tensor> params, float learning_rate, float beta1, float beta2,
           float eps)
    : params_(std::move(params)), lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const Tensor& p : params_) {
    m_.emplace_back(size_t(p.size()), 0.0f);
    v_.emplace_back(size_t(p.size()), 0.0f);
  }
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(double(beta1_), double(t_));
  const double bc2 = 1.0 - std::pow(double(beta2_), double(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    if (!p.has_grad()) continue;
    const std::vector<float>& g = p.grad();
    std::vector<float>& m = m_[i];
    std::vector<float>& v = v_[i];
    float* w = p.data().data();
    for (size_t j = 0; j < g.size(); ++j) {
      m[j] = beta1_ * m[j] + (1.0f - beta1_) * g[j];
      v[j] = beta2_ * v[j] + (1.0f - beta2_) * g[j] * g[j];
      const float mhat = float(m[j] / bc1);
      const float vhat = float(v[j] / bc2);
      w[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

void Adam::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

double grad_norm(const std::vector<Tensor>& params) {
  double total = 0.0;
  for (const Tensor& p : params) {
    if (!p.has_grad()) continue;
    for (float g : p.grad()) total += double(g) * g;
  }
  return std::sqrt(total);
}

void clip_grad_norm(const std::vector<Tensor>& params, float max_norm) {
  const double norm = grad_norm(params);
  if (norm <= double(max_norm) || norm == 0.0) return;
  const float s = float(double(max_norm) / norm);
  for (Tensor p : params) {  // copy of the handle, shared storage
    if (!p.has_grad()) continue;
    for (float& g : p.grad()) g *= s;
  }
}

std::vector<float> pretrain(Parameters& params, const std::vector<TextPair>& corpus,
                            const Hyper& hyper, const StepCallback& on_step) {
  if (corpus.empty()) throw DataError("pretrain: empty corpus");
  if (hyper.steps < 0) throw ContractError("pretrain: steps must be >= 0");
  if (hyper.steps == 0) return {};

  std::vector<std::vector<int>> prompts, answers;
  prompts.reserve(corpus.size());
  answers.reserve(corpus.size());
  for (const TextPair& pair : corpus) {
    prompts.push_back(encode(pair.prompt));
    answers.push_back(encode(pair.answer));
  }

  params.set_tracked(true);
  std::vector<Tensor> trainable;
  for (auto& [name, t] : params.named()) trainable.push_back(*t);
  Adam opt(trainable, hyper.learning_rate, hyper.beta1, hyper.beta2, hyper.eps);
  opt.zero_grad();

  Rng rng(Rng::derive(hyper.seed, "pretrain.shuffle"));
  std::vector<size_t> order(corpus.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  size_t cursor = 0;

  std::vector<float> loss_log;
  loss_log.reserve(size_t(hyper.steps));
  const int batch = std::max(1, hyper.batch_size);
  for (int step = 0; step < hyper.steps; ++step) {
    Tensor total;
    for (int b = 0; b < batch; ++b) {
      if (cursor == order.size()) {
        rng.shuffle(order);
        cursor = 0;
      }
      const size_t idx = order[cursor++];
      Tensor l = loss_on_example(params, prompts[idx], answers[idx]);
      total = b == 0 ? l : add(total, l);
    }
    Tensor loss = scale(total, 1.0f / float(batch));
    backward(loss);
    if (hyper.grad_clip_norm > 0.0f) clip_grad_norm(trainable, hyper.grad_clip_norm);
    opt.step();
    opt.zero_grad();
    loss_log.push_back(loss.item());
    if (on_step) on_step(step, loss_log.back());
  }
  params.set_tracked(false);
  return loss_log;
}

}  // namespace softshield
