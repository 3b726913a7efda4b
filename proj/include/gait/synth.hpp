#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "gait/dataset.hpp"

namespace gait {

/// Body geometry and gait of one synthetic subject. Lengths are fractions of
/// the frame height; angles are radians; frequency is gait cycles per frame.
struct WalkerIdentity {
  std::string subject_id;
  double body_height = 0.8;   // head top to feet
  double torso_ratio = 0.5;   // torso width / torso height
  double limb_length = 0.47;  // leg length / body height
  double stride = 0.4;        // peak leg swing angle
  double frequency = 0.06;
  double phase = 0.0;
};

/// Everything needed to render one sequence. Rendering is a pure function of
/// these fields.
struct SyntheticWalkerSpec {
  WalkerIdentity identity;
  double view_shear = 0.0;  // horizontal shear, x += shear * (y - centre)
  double view_scale = 1.0;  // horizontal scale
  std::size_t frames = 25;
  std::size_t size = 64;
  double noise = 0.0;       // per-pixel flip probability
  std::uint64_t seed = 0;
};

// Shear/scale standing in for a camera azimuth in degrees (70 is unsheared).
double view_shear_for(int view_deg);
double view_scale_for(int view_deg);

WalkerIdentity random_identity(std::string subject_id, std::mt19937_64& rng);

/// Binary articulated walker: head disc, torso ellipse, two swinging legs and
/// two counter-swinging arms. Fewer than 2 frames is rejected.
std::vector<Image> render_walker(const SyntheticWalkerSpec& spec);

/// Renders one sequence with the view transform for `view_deg` and labels it.
SilhouetteSequence generate_walker(const SyntheticWalkerSpec& spec, Role role, int view_deg);

struct SynthOptions {
  std::vector<int> views{55, 65, 75, 85};
  std::size_t frames = 25;
  std::size_t size = 64;
  double noise = 0.01;
  std::uint64_t seed = 0;
};

// probe + gallery sequence for every identity and view. Per-sequence start
// phase and noise are drawn from the seed.
Dataset synthesize_dataset(std::span<const WalkerIdentity> identities, const SynthOptions& opts);

// `count` random identities named s000, s001, ...
std::vector<WalkerIdentity> random_identities(std::size_t count, std::uint64_t seed);

// One JSON object per line with the WalkerIdentity fields.
std::vector<WalkerIdentity> read_identity_file(const std::filesystem::path& path);
void write_identity_file(const std::filesystem::path& path,
                         std::span<const WalkerIdentity> identities);

}  // namespace gait
