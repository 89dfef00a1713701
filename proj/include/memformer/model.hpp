/*
 * Copyright 2026 The Memformer Lab Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Linear-attention models over regression prompts.
//
// Four variants share one attention primitive:
//   linear_tf            Z <- Z + (1/n) Attn(Z)
//   memformer_cgd        R <- Attn(Z) + deflection * R_prev,
//                        Z <- Z + step * (1/n) R
//   memformer_lfom       R_l <- Attn(Z_l),
//                        Z <- Z + (1/n) sum_j gate_j ( . ) R_j   (Hadamard)
//   memformer_lfom_gdpp  same, with the covariate-mixing B blocks live
//
// Attention weights enter only through the block embedding
//   P = [[B, 0], [0, 1]],  Q = -[[A, 0], [0, 0]],
// and the masked product P Z M (Z^T Q Z) with M = [[I_n, 0], [0, 0]].
// The product is evaluated as P ((Z*mask) Z^T) Q Z, which is the same
// matrix but avoids the (n+1)^2 intermediate; the mask is the Hadamard
// equivalent of right-multiplying by M.
//
// Every forward is templated on the value type: Matrix for plain
// evaluation, Value for a recorded tape.

#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "memformer/matrix.hpp"
#include "memformer/rng.hpp"
#include "memformer/tape.hpp"
#include "memformer/tasks.hpp"

namespace memformer {

enum class Variant { kLinearTf, kMemformerCgd, kMemformerLfom, kMemformerLfomGdpp };

inline std::string variant_name(Variant v) {
  switch (v) {
    case Variant::kLinearTf: return "linear_tf";
    case Variant::kMemformerCgd: return "memformer_cgd";
    case Variant::kMemformerLfom: return "memformer_lfom";
    case Variant::kMemformerLfomGdpp: return "memformer_lfom_gdpp";
  }
  return "unknown";
}

inline Variant variant_from_name(const std::string& s) {
  if (s == "linear_tf") return Variant::kLinearTf;
  if (s == "memformer_cgd") return Variant::kMemformerCgd;
  if (s == "memformer_lfom") return Variant::kMemformerLfom;
  if (s == "memformer_lfom_gdpp") return Variant::kMemformerLfomGdpp;
  throw std::invalid_argument("unknown variant: " + s);
}

struct ModelConfig {
  Variant variant = Variant::kLinearTf;
  int layers = 3;
  int heads = 1;
  int dim = 5;         // d
  int prompt_len = 20; // n
  bool tie_gates = true;        // gate_j applies to register j at every layer
  bool scalar_gates = false;    // gate = c * all-ones
  bool train_precond = true;
  bool identity_precond = false; // freeze A = I (the no-preconditioning setup)

  bool uses_memory_scalars() const { return variant == Variant::kMemformerCgd; }
  bool uses_gates() const {
    return variant == Variant::kMemformerLfom || variant == Variant::kMemformerLfomGdpp;
  }
  bool uses_mixer() const { return variant == Variant::kMemformerLfomGdpp; }

  void validate() const {
    if (layers < 1) throw std::invalid_argument("ModelConfig: layers must be >= 1");
    if (heads < 1) throw std::invalid_argument("ModelConfig: heads must be >= 1");
    if (dim < 1 || prompt_len < 1) throw std::invalid_argument("ModelConfig: bad dims");
    if (scalar_gates && !tie_gates) {
      throw std::invalid_argument("ModelConfig: scalar_gates requires tie_gates");
    }
  }
};

struct HeadParams {
  Matrix precond;  // A, d x d
  Matrix mixer;    // B, d x d; zero unless the gdpp variant is live
};

struct LayerParams {
  std::vector<HeadParams> heads;
  Matrix step_coef = Matrix::scalar(1.0);   // alpha
  Matrix deflection = Matrix::scalar(0.0);  // gamma
  std::vector<Matrix> gates;                // tied: {gate_l}; untied: {gate_0..gate_l}
  Matrix gate_scale = Matrix::scalar(0.0);  // c_l when scalar_gates
};

struct ModelParams {
  ModelConfig config;
  std::vector<LayerParams> layers;

  // Gaussian init for trainable matrices; step 1.0 and deflection 0.0 so an
  // untrained memformer_cgd starts as the plain linear transformer.
  static ModelParams init(const ModelConfig& cfg, Rng rng, double init_std) {
    cfg.validate();
    ModelParams p;
    p.config = cfg;
    p.layers.resize(cfg.layers);
    const int d = cfg.dim;
    for (int l = 0; l < cfg.layers; ++l) {
      LayerParams& layer = p.layers[l];
      layer.heads.resize(cfg.heads);
      for (int h = 0; h < cfg.heads; ++h) {
        layer.heads[h].precond = cfg.identity_precond
                                     ? Matrix::identity(d)
                                     : rng.gaussian_matrix(d, d, init_std);
        layer.heads[h].mixer = cfg.uses_mixer()
                                   ? rng.gaussian_matrix(d, d, init_std)
                                   : Matrix(d, d);
      }
      if (cfg.uses_gates()) {
        if (cfg.scalar_gates) {
          layer.gate_scale = Matrix::scalar(rng.gaussian(0.0, init_std));
        } else {
          const int count = cfg.tie_gates ? 1 : l + 1;
          for (int j = 0; j < count; ++j) {
            layer.gates.push_back(rng.gaussian_matrix(d + 1, cfg.prompt_len + 1, init_std));
          }
        }
      }
    }
    return p;
  }
};

// Marks the covariate-mixing blocks trainable; values are untouched, so the
// output is unchanged until training moves them.
inline ModelParams gdpp_enable(ModelParams params) {
  if (params.config.variant != Variant::kMemformerLfom &&
      params.config.variant != Variant::kMemformerLfomGdpp) {
    throw std::invalid_argument("gdpp_enable: expects an lfom-family model");
  }
  params.config.variant = Variant::kMemformerLfomGdpp;
  return params;
}

// ---------------------------------------------------------------------------
// Trainable-parameter layout: a stable id per trainable tensor, in a fixed
// traversal order (layers outer, heads inner). Gradient reduction and the
// optimizer both follow this order.
// ---------------------------------------------------------------------------

struct ParamLayout {
  struct LayerSlots {
    std::vector<int> precond;
    std::vector<int> mixer;
    int step = -1;
    int deflection = -1;
    std::vector<int> gates;
    int gate_scale = -1;
  };
  std::vector<LayerSlots> layers;
  std::vector<std::string> names;

  int count() const { return static_cast<int>(names.size()); }

  static ParamLayout build(const ModelConfig& cfg) {
    cfg.validate();
    ParamLayout out;
    out.layers.resize(cfg.layers);
    auto assign = [&out](const std::string& name) {
      out.names.push_back(name);
      return static_cast<int>(out.names.size()) - 1;
    };
    for (int l = 0; l < cfg.layers; ++l) {
      LayerSlots& slots = out.layers[l];
      slots.precond.assign(cfg.heads, -1);
      slots.mixer.assign(cfg.heads, -1);
      const std::string pl = "layer" + std::to_string(l);
      for (int h = 0; h < cfg.heads; ++h) {
        const std::string ph = pl + ".head" + std::to_string(h);
        if (cfg.train_precond) slots.precond[h] = assign(ph + ".precond");
        if (cfg.uses_mixer()) slots.mixer[h] = assign(ph + ".mixer");
      }
      if (cfg.uses_memory_scalars()) {
        slots.step = assign(pl + ".step_coef");
        slots.deflection = assign(pl + ".deflection");
      }
      if (cfg.uses_gates()) {
        if (cfg.scalar_gates) {
          slots.gate_scale = assign(pl + ".gate_scale");
        } else {
          const int count = cfg.tie_gates ? 1 : l + 1;
          for (int j = 0; j < count; ++j) {
            slots.gates.push_back(assign(pl + ".gate" + std::to_string(j)));
          }
        }
      }
    }
    return out;
  }
};

inline std::vector<Matrix*> collect_params(ModelParams& params, const ParamLayout& layout) {
  std::vector<Matrix*> out(layout.count(), nullptr);
  for (int l = 0; l < static_cast<int>(params.layers.size()); ++l) {
    LayerParams& layer = params.layers[l];
    const ParamLayout::LayerSlots& slots = layout.layers[l];
    for (int h = 0; h < static_cast<int>(layer.heads.size()); ++h) {
      if (slots.precond[h] >= 0) out[slots.precond[h]] = &layer.heads[h].precond;
      if (slots.mixer[h] >= 0) out[slots.mixer[h]] = &layer.heads[h].mixer;
    }
    if (slots.step >= 0) out[slots.step] = &layer.step_coef;
    if (slots.deflection >= 0) out[slots.deflection] = &layer.deflection;
    for (int j = 0; j < static_cast<int>(slots.gates.size()); ++j) {
      out[slots.gates[j]] = &layer.gates[j];
    }
    if (slots.gate_scale >= 0) out[slots.gate_scale] = &layer.gate_scale;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Binding: lift parameters and constants into the evaluation value type.
// ---------------------------------------------------------------------------

struct PlainBinder {
  using M = Matrix;
  M lift(const Matrix& m) const { return m; }
  M lift_param(const Matrix& m, int) const { return m; }
};

struct TapeBinder {
  Tape* tape;
  using M = Value;
  M lift(const Matrix& m) const { return tape->constant(m); }
  M lift_param(const Matrix& m, int id) const {
    return id >= 0 ? tape->leaf(m, id) : tape->constant(m);
  }
};

template <class M>
struct BoundLayer {
  std::vector<std::pair<M, M>> heads;  // (P_h, Q_h)
  std::optional<M> step_coef;
  std::optional<M> deflection;
  std::vector<M> gates;
  std::optional<M> gate_scale;
};

template <class M>
struct BoundModel {
  ModelConfig cfg;
  std::vector<BoundLayer<M>> layers;
  M col_mask;   // ones with a zero last column; Hadamard form of the mask
  M zero_reg;   // zero register feeding the first memory update
};

namespace detail {
// [[I_d], [0]] used to embed d x d blocks into the (d+1) frame.
inline Matrix block_embedder(int d) {
  Matrix u(d + 1, d);
  for (int i = 0; i < d; ++i) u(i, i) = 1.0;
  return u;
}

inline Matrix corner_one(int d) {
  Matrix c(d + 1, d + 1);
  c(d, d) = 1.0;
  return c;
}

inline Matrix column_mask(int d, int n) {
  Matrix m = Matrix::ones(d + 1, n + 1);
  for (int i = 0; i <= d; ++i) m(i, n) = 0.0;
  return m;
}
}  // namespace detail

template <class Binder>
BoundModel<typename Binder::M> bind_model(const Binder& binder, const ModelParams& params,
                                          const ParamLayout& layout) {
  using M = typename Binder::M;
  const ModelConfig& cfg = params.config;
  const int d = cfg.dim;

  BoundModel<M> bound;
  bound.cfg = cfg;
  bound.col_mask = binder.lift(detail::column_mask(d, cfg.prompt_len));
  bound.zero_reg = binder.lift(Matrix(d + 1, cfg.prompt_len + 1));

  const M embed = binder.lift(detail::block_embedder(d));
  const M embed_t = binder.lift(transpose(detail::block_embedder(d)));
  const M corner = binder.lift(detail::corner_one(d));

  bound.layers.resize(params.layers.size());
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const LayerParams& layer = params.layers[l];
    const ParamLayout::LayerSlots& slots = layout.layers[l];
    BoundLayer<M>& b = bound.layers[l];
    for (std::size_t h = 0; h < layer.heads.size(); ++h) {
      const M a = binder.lift_param(layer.heads[h].precond, slots.precond[h]);
      const M q = scale(-1.0, matmul(matmul(embed, a), embed_t));
      M p = corner;
      if (cfg.uses_mixer()) {
        const M bm = binder.lift_param(layer.heads[h].mixer, slots.mixer[h]);
        p = add(matmul(matmul(embed, bm), embed_t), corner);
      }
      b.heads.emplace_back(p, q);
    }
    if (cfg.uses_memory_scalars()) {
      b.step_coef = binder.lift_param(layer.step_coef, slots.step);
      b.deflection = binder.lift_param(layer.deflection, slots.deflection);
    }
    if (cfg.uses_gates()) {
      if (cfg.scalar_gates) {
        b.gate_scale = binder.lift_param(layer.gate_scale, slots.gate_scale);
      } else {
        for (std::size_t j = 0; j < layer.gates.size(); ++j) {
          b.gates.push_back(binder.lift_param(layer.gates[j], slots.gates[j]));
        }
      }
    }
  }
  return bound;
}

// ---------------------------------------------------------------------------
// Forward passes.
// ---------------------------------------------------------------------------

// Masked linear attention, summed over heads.
template <class M>
M attention(const M& z, const BoundLayer<M>& layer, const M& col_mask) {
  const M masked = hadamard(z, col_mask);
  const M k = matmul(masked, transpose(z));  // (d+1) x (d+1)
  std::optional<M> out;
  for (const auto& [p, q] : layer.heads) {
    const M term = matmul(p, matmul(k, matmul(q, z)));
    out = out ? add(*out, term) : term;
  }
  return *out;
}

template <class M>
struct ForwardResult {
  std::vector<M> layer_outputs;  // Z_0 .. Z_L
  std::vector<M> predictions;    // 1x1 readouts -Z_l[d, n], l = 0 .. L
};

template <class M>
void push_snapshot(ForwardResult<M>& r, const M& z, int d, int n) {
  r.layer_outputs.push_back(z);
  r.predictions.push_back(scale(-1.0, entry(z, d, n)));
}

template <class M>
ForwardResult<M> tf_forward(const M& z0, const BoundModel<M>& model) {
  const int d = model.cfg.dim, n = model.cfg.prompt_len;
  ForwardResult<M> result;
  M z = z0;
  push_snapshot(result, z, d, n);
  for (const BoundLayer<M>& layer : model.layers) {
    z = add(z, scale(1.0 / n, attention(z, layer, model.col_mask)));
    push_snapshot(result, z, d, n);
  }
  return result;
}

template <class M>
ForwardResult<M> memformer_cgd_forward(const M& z0, const BoundModel<M>& model) {
  const int d = model.cfg.dim, n = model.cfg.prompt_len;
  ForwardResult<M> result;
  M z = z0;
  M reg = model.zero_reg;
  push_snapshot(result, z, d, n);
  for (const BoundLayer<M>& layer : model.layers) {
    reg = add(attention(z, layer, model.col_mask), smul(*layer.deflection, reg));
    z = add(z, smul(*layer.step_coef, scale(1.0 / n, reg)));
    push_snapshot(result, z, d, n);
  }
  return result;
}

template <class M>
ForwardResult<M> memformer_lfom_forward(const M& z0, const BoundModel<M>& model) {
  const int d = model.cfg.dim, n = model.cfg.prompt_len;
  const bool tied = model.cfg.tie_gates;
  ForwardResult<M> result;
  M z = z0;
  std::vector<M> registers;
  push_snapshot(result, z, d, n);
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    registers.push_back(attention(z, model.layers[l], model.col_mask));
    std::optional<M> sum;
    for (std::size_t j = 0; j <= l; ++j) {
      // Gate for register j at layer l: the register layer's own gate when
      // tied, otherwise this layer's j-th gate. Scalar gates act as
      // c * all-ones under the Hadamard product.
      const BoundLayer<M>& gate_owner = model.layers[tied ? j : l];
      M term = model.cfg.scalar_gates
                   ? smul(*gate_owner.gate_scale, registers[j])
                   : hadamard(gate_owner.gates[tied ? 0 : j], registers[j]);
      sum = sum ? add(*sum, term) : term;
    }
    z = add(z, scale(1.0 / n, *sum));
    push_snapshot(result, z, d, n);
  }
  return result;
}

template <class M>
ForwardResult<M> forward_model(const M& z0, const BoundModel<M>& model) {
  switch (model.cfg.variant) {
    case Variant::kLinearTf: return tf_forward(z0, model);
    case Variant::kMemformerCgd: return memformer_cgd_forward(z0, model);
    case Variant::kMemformerLfom:
    case Variant::kMemformerLfomGdpp: return memformer_lfom_forward(z0, model);
  }
  throw std::logic_error("forward_model: unknown variant");
}

// ---------------------------------------------------------------------------
// Plain-mode evaluation helpers.
// ---------------------------------------------------------------------------

inline ForwardResult<Matrix> eval_forward(const ModelParams& params, const Matrix& z0) {
  const ParamLayout layout = ParamLayout::build(params.config);
  const BoundModel<Matrix> bound = bind_model(PlainBinder{}, params, layout);
  return forward_model(z0, bound);
}

inline double predict(const ModelParams& params, const TaskInstance& task) {
  return eval_forward(params, build_prompt(task)).predictions.back()(0, 0);
}

// Monte-Carlo estimate of the training objective: mean squared error of the
// final readout against the held-out query label.
inline double icl_objective(const ModelParams& params, const TaskBatch& batch) {
  if (batch.empty()) throw std::invalid_argument("icl_objective: empty batch");
  const ParamLayout layout = ParamLayout::build(params.config);
  const BoundModel<Matrix> bound = bind_model(PlainBinder{}, params, layout);
  double total = 0.0;
  for (const TaskInstance& task : batch) {
    const ForwardResult<Matrix> fwd = forward_model(build_prompt(task), bound);
    total += query_sq_error(fwd.predictions.back()(0, 0), task);
  }
  return total / static_cast<double>(batch.size());
}

// Per-layer objective curve (layer 0 = untouched prompt).
inline std::vector<double> per_layer_objective(const ModelParams& params,
                                               const TaskBatch& batch) {
  if (batch.empty()) throw std::invalid_argument("per_layer_objective: empty batch");
  const ParamLayout layout = ParamLayout::build(params.config);
  const BoundModel<Matrix> bound = bind_model(PlainBinder{}, params, layout);
  std::vector<double> losses(params.config.layers + 1, 0.0);
  for (const TaskInstance& task : batch) {
    const ForwardResult<Matrix> fwd = forward_model(build_prompt(task), bound);
    for (std::size_t l = 0; l < fwd.predictions.size(); ++l) {
      losses[l] += query_sq_error(fwd.predictions[l](0, 0), task);
    }
  }
  for (double& v : losses) v /= static_cast<double>(batch.size());
  return losses;
}

// ---------------------------------------------------------------------------
// Checkpoints: shape-tagged JSON.
// ---------------------------------------------------------------------------

inline nlohmann::json matrix_to_json(const Matrix& m) {
  return nlohmann::json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.data()}};
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
  return Matrix::from_external(j.at("rows").get<int>(), j.at("cols").get<int>(),
                               j.at("data").get<std::vector<double>>());
}

inline nlohmann::json config_to_json(const ModelConfig& cfg) {
  return nlohmann::json{{"variant", variant_name(cfg.variant)},
                        {"layers", cfg.layers},
                        {"heads", cfg.heads},
                        {"dim", cfg.dim},
                        {"prompt_len", cfg.prompt_len},
                        {"tie_gates", cfg.tie_gates},
                        {"scalar_gates", cfg.scalar_gates},
                        {"train_precond", cfg.train_precond},
                        {"identity_precond", cfg.identity_precond}};
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  cfg.variant = variant_from_name(j.at("variant").get<std::string>());
  cfg.layers = j.at("layers").get<int>();
  cfg.heads = j.at("heads").get<int>();
  cfg.dim = j.at("dim").get<int>();
  cfg.prompt_len = j.at("prompt_len").get<int>();
  cfg.tie_gates = j.at("tie_gates").get<bool>();
  cfg.scalar_gates = j.at("scalar_gates").get<bool>();
  cfg.train_precond = j.at("train_precond").get<bool>();
  cfg.identity_precond = j.at("identity_precond").get<bool>();
  cfg.validate();
  return cfg;
}

inline nlohmann::json params_to_json(const ModelParams& params) {
  nlohmann::json layers = nlohmann::json::array();
  for (const LayerParams& layer : params.layers) {
    nlohmann::json heads = nlohmann::json::array();
    for (const HeadParams& h : layer.heads) {
      heads.push_back({{"precond", matrix_to_json(h.precond)},
                       {"mixer", matrix_to_json(h.mixer)}});
    }
    nlohmann::json gates = nlohmann::json::array();
    for (const Matrix& g : layer.gates) gates.push_back(matrix_to_json(g));
    layers.push_back({{"heads", heads},
                      {"step_coef", layer.step_coef(0, 0)},
                      {"deflection", layer.deflection(0, 0)},
                      {"gates", gates},
                      {"gate_scale", layer.gate_scale(0, 0)}});
  }
  return nlohmann::json{{"format", "memformer-checkpoint-v1"},
                        {"config", config_to_json(params.config)},
                        {"layers", layers}};
}

inline ModelParams params_from_json(const nlohmann::json& j) {
  if (j.at("format").get<std::string>() != "memformer-checkpoint-v1") {
    throw std::invalid_argument("checkpoint: unknown format tag");
  }
  ModelParams params;
  params.config = config_from_json(j.at("config"));
  for (const nlohmann::json& jl : j.at("layers")) {
    LayerParams layer;
    for (const nlohmann::json& jh : jl.at("heads")) {
      HeadParams h;
      h.precond = matrix_from_json(jh.at("precond"));
      h.mixer = matrix_from_json(jh.at("mixer"));
      if (!params.config.uses_mixer() && h.mixer.max_abs() != 0.0) {
        throw std::invalid_argument("checkpoint: nonzero mixer outside the gdpp variant");
      }
      layer.heads.push_back(std::move(h));
    }
    layer.step_coef = Matrix::scalar(jl.at("step_coef").get<double>());
    layer.deflection = Matrix::scalar(jl.at("deflection").get<double>());
    for (const nlohmann::json& jg : jl.at("gates")) layer.gates.push_back(matrix_from_json(jg));
    layer.gate_scale = Matrix::scalar(jl.at("gate_scale").get<double>());
    params.layers.push_back(std::move(layer));
  }
  if (static_cast<int>(params.layers.size()) != params.config.layers) {
    throw std::invalid_argument("checkpoint: layer count does not match config");
  }
  return params;
}

}  // namespace memformer
