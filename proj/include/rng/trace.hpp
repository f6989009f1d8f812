#pragma once

#include <vector>

#include "rng/autodiff.hpp"
#include "rng/crf.hpp"

namespace rng {

/// Which constraints are active. Turning one off mirrors the ablation
/// variants: gr_con off fixes the gate at 1, ib_con off uses the
/// deterministic mean and drops the IB loss, sc flags drop the InfoNCE terms.
struct AblationFlags {
  bool gr_con = true;
  bool ib_con = true;
  bool sc_con_coarse = true;
  bool sc_con_fine = true;

  bool operator==(const AblationFlags&) const = default;
};

/// Activations of one sample's forward pass.
struct SampleTrace {
  ad::Var x_text;   // N×d
  ad::Var x_image;  // M×d
  ad::Var mu_text, sigma_text, z_text;
  ad::Var mu_image, sigma_image, z_image;
  ad::Var gate;      // 1×1
  ad::Var z_fused;   // N×d
  ad::Var emissions; // n×5 (content tokens only)
  ad::Var kl_text, kl_image;  // invalid when ib_con is off
  TagSeq gold;
};

struct ForwardTrace {
  std::vector<SampleTrace> samples;
  AblationFlags flags;
  ad::Var transitions;
  ad::Var proj_text, proj_image;
};

}  // namespace rng
