#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

#include "uwmmse/gcn.hpp"
#include "uwmmse/rate.hpp"

namespace uwmmse {

inline constexpr std::size_t kDefaultLayers = 4;
inline constexpr int kParamFormatVersion = 1;

struct LayerParams {
  GcnParams a;  // produces the multiplicative term of the w-update
  GcnParams b;  // produces the additive term
  friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

struct ModelParams {
  std::vector<LayerParams> layers;  // K entries
  double p_max = 1.0;
  double sigma = 1.0;
  // Network size the parameters were trained for; 0 when trained across sizes.
  std::size_t nodes = 0;

  std::size_t depth() const noexcept { return layers.size(); }
  std::size_t parameter_count() const noexcept;
  void validate() const;

  // Flat view for the optimizers: for each layer, a then b, each as
  // w1 (row-major), b1, w2, b2.
  std::vector<double> flatten() const;
  void assign(std::span<const double> flat);

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

// Identity-unfold initialization: every a-network outputs 1 and every
// b-network 0, so the fresh model is exactly truncated WMMSE with K sweeps.
ModelParams init_model(std::size_t k, double p_max, double sigma, std::uint64_t seed,
                       std::size_t hidden = kDefaultHidden);

// All networks drawn with GcnInit::standard; used for equivariance and
// feasibility checks over arbitrary parameters.
ModelParams random_model(std::size_t k, double p_max, double sigma, std::uint64_t seed,
                         std::size_t hidden = kDefaultHidden);

struct LayerTrace {
  std::vector<Vector> a, b, u, w, v;  // one entry per layer
  Vector p;
  // Smallest distance of any relu pre-activation or clamp argument to its
  // kink; gradient checks skip instances where this is tiny.
  double kink_margin = 0.0;
};

// Inference path (no tape). Uses the channel's sigma.
Vector uwmmse_power(const ChannelMatrix& ch, const ModelParams& theta);
std::pair<PowerAllocation, LayerTrace> forward(const ChannelMatrix& ch, const ModelParams& theta);

// Differentiable path.
struct ModelVars {
  std::vector<GcnVars> a, b;
};
ModelVars model_leaves(ad::Tape& tape, const ModelParams& theta, bool requires_grad);
// Returns the power vector (shape [M]).
ad::Var forward(ad::Tape& tape, const ChannelMatrix& ch, const ModelVars& theta, double p_max);
// Sum-rate of a power vector on the tape (base-2 logs).
ad::Var sum_rate(ad::Tape& tape, const ChannelMatrix& ch, ad::Var p);
// Flat gradient in ModelParams::flatten order.
std::vector<double> gather_grad(const ad::Tape& tape, const ModelVars& vars);

// Parameter files. Layout:
//   uwmmse-params <version>
//   layers <K>
//   p_max <value>
//   sigma <value>
//   nodes <M>        0 = not tied to one size
//   layer <k> a      followed by a gcn block (see write_gcn_params)
//   layer <k> b      followed by a gcn block
//   end
void save_params(std::ostream& out, const ModelParams& theta);
ModelParams load_params(std::istream& in);
void save_params(const std::filesystem::path& path, const ModelParams& theta);
ModelParams load_params(const std::filesystem::path& path);

}  // namespace uwmmse
