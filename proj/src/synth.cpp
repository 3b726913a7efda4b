#include "gait/synth.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

#include <fmt/format.h>
#include <json.hpp>

#include "gait/error.hpp"
#include "gait/rng.hpp"

namespace gait {

namespace {

struct Vec2 {
  double x, y;
};

double segment_distance(Vec2 p, Vec2 a, Vec2 b) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double ex = p.x - (a.x + t * dx), ey = p.y - (a.y + t * dy);
  return std::sqrt(ex * ex + ey * ey);
}

Vec2 limb_end(Vec2 root, double length, double angle) {
  return {root.x + length * std::sin(angle), root.y + length * std::cos(angle)};
}

}  // namespace

double view_shear_for(int view_deg) { return (view_deg - 70) / 100.0; }
double view_scale_for(int view_deg) { return 1.0 - (85 - view_deg) / 300.0; }

WalkerIdentity random_identity(std::string subject_id, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  WalkerIdentity id;
  id.subject_id = std::move(subject_id);
  id.body_height = 0.65 + 0.27 * u(rng);
  id.torso_ratio = 0.35 + 0.45 * u(rng);
  id.limb_length = 0.40 + 0.15 * u(rng);
  id.stride = 0.20 + 0.40 * u(rng);
  id.frequency = 0.04 + 0.05 * u(rng);
  id.phase = 2 * std::numbers::pi * u(rng);
  return id;
}

std::vector<Image> render_walker(const SyntheticWalkerSpec& spec) {
  if (spec.frames < 2) throw std::invalid_argument("render_walker: need at least 2 frames");
  if (spec.size < 8) throw std::invalid_argument("render_walker: frame size must be >= 8");
  const WalkerIdentity& id = spec.identity;
  const double n = static_cast<double>(spec.size);

  // Body geometry in pixel units; feet rest near the bottom edge.
  const double height = id.body_height * n;
  const double ground = 0.95 * n;
  const double leg = id.limb_length * height;
  const double head_r = 0.075 * height;
  const double torso_h = height - leg - 2 * head_r;
  const double torso_half_w = 0.5 * id.torso_ratio * torso_h;
  const double leg_w = 0.055 * height;
  const double arm_w = 0.04 * height;
  const double arm_len = 0.8 * torso_h;
  const double cx = 0.5 * n;
  const double cy = 0.5 * n;

  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);

  std::vector<Image> frames;
  frames.reserve(spec.frames);
  for (std::size_t t = 0; t < spec.frames; ++t) {
    const double swing =
        id.stride * std::sin(2 * std::numbers::pi * id.frequency * static_cast<double>(t) + id.phase);
    // Hip drops as the legs spread.
    const double hip_y = ground - leg * std::cos(swing);
    const Vec2 hip{cx, hip_y};
    const Vec2 torso_c{cx, hip_y - 0.5 * torso_h};
    const Vec2 shoulder{cx, hip_y - 0.9 * torso_h};
    const Vec2 head{cx, hip_y - torso_h - head_r};
    const Vec2 foot_l = limb_end(hip, leg, swing);
    const Vec2 foot_r = limb_end(hip, leg, -swing);
    const Vec2 hand_l = limb_end(shoulder, arm_len, -0.6 * swing);
    const Vec2 hand_r = limb_end(shoulder, arm_len, 0.6 * swing);

    Image img({spec.size, spec.size});
    for (std::size_t py = 0; py < spec.size; ++py) {
      for (std::size_t px = 0; px < spec.size; ++px) {
        // Undo the view transform to get body coordinates.
        const double y = py + 0.5;
        const double x = cx + ((px + 0.5) - cx - spec.view_shear * (y - cy)) / spec.view_scale;
        const Vec2 p{x, y};
        const double ex = (x - torso_c.x) / torso_half_w, ey = (y - torso_c.y) / (0.5 * torso_h);
        bool on = ex * ex + ey * ey <= 1.0;
        on = on || std::hypot(x - head.x, y - head.y) <= head_r;
        on = on || segment_distance(p, hip, foot_l) <= 0.5 * leg_w;
        on = on || segment_distance(p, hip, foot_r) <= 0.5 * leg_w;
        on = on || segment_distance(p, shoulder, hand_l) <= 0.5 * arm_w;
        on = on || segment_distance(p, shoulder, hand_r) <= 0.5 * arm_w;
        if (spec.noise > 0 && u(rng) < spec.noise) on = !on;
        img[py * spec.size + px] = on ? 1.0f : 0.0f;
      }
    }
    frames.push_back(std::move(img));
  }
  return frames;
}

SilhouetteSequence generate_walker(const SyntheticWalkerSpec& spec, Role role, int view_deg) {
  return SilhouetteSequence{spec.identity.subject_id, role, view_deg, render_walker(spec)};
}

Dataset synthesize_dataset(std::span<const WalkerIdentity> identities, const SynthOptions& opts) {
  Dataset ds;
  for (std::size_t i = 0; i < identities.size(); ++i) {
    for (Role role : {Role::kProbe, Role::kGallery}) {
      for (int view : opts.views) {
        const std::uint64_t seq_seed = derive_seed(
            opts.seed, "synth", (i << 16) | (static_cast<std::uint64_t>(role) << 12) |
                                    static_cast<std::uint64_t>(view & 0xfff));
        std::mt19937_64 rng(seq_seed);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        SyntheticWalkerSpec spec;
        spec.identity = identities[i];
        spec.identity.phase += 2 * std::numbers::pi * u(rng);
        spec.view_shear = view_shear_for(view);
        spec.view_scale = view_scale_for(view);
        spec.frames = opts.frames;
        spec.size = opts.size;
        spec.noise = opts.noise;
        spec.seed = rng();
        ds.sequences.push_back(generate_walker(spec, role, view));
      }
    }
  }
  std::sort(ds.sequences.begin(), ds.sequences.end(), [](const auto& a, const auto& b) {
    return std::tie(a.subject_id, a.role, a.view) < std::tie(b.subject_id, b.role, b.view);
  });
  return ds;
}

std::vector<WalkerIdentity> random_identities(std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(derive_seed(seed, "identities"));
  std::vector<WalkerIdentity> ids;
  ids.reserve(count);
  for (std::size_t i = 0; i < count; ++i) ids.push_back(random_identity(fmt::format("s{:03d}", i), rng));
  return ids;
}

std::vector<WalkerIdentity> read_identity_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open identity file " + path.string());
  std::vector<WalkerIdentity> ids;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      WalkerIdentity id;
      id.subject_id = j.at("subject_id").get<std::string>();
      id.body_height = j.value("body_height", id.body_height);
      id.torso_ratio = j.value("torso_ratio", id.torso_ratio);
      id.limb_length = j.value("limb_length", id.limb_length);
      id.stride = j.value("stride", id.stride);
      id.frequency = j.value("frequency", id.frequency);
      id.phase = j.value("phase", id.phase);
      if (id.subject_id.empty() || id.subject_id.find_first_of(" \t/") != std::string::npos) {
        throw DataError("subject_id must be non-empty without spaces or '/'");
      }
      ids.push_back(std::move(id));
    } catch (const std::exception& e) {
      throw DataError(fmt::format("{}:{}: {}", path.string(), lineno, e.what()));
    }
  }
  return ids;
}

void write_identity_file(const std::filesystem::path& path,
                         std::span<const WalkerIdentity> identities) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write identity file " + path.string());
  for (const auto& id : identities) {
    nlohmann::ordered_json j;
    j["subject_id"] = id.subject_id;
    j["body_height"] = id.body_height;
    j["torso_ratio"] = id.torso_ratio;
    j["limb_length"] = id.limb_length;
    j["stride"] = id.stride;
    j["frequency"] = id.frequency;
    j["phase"] = id.phase;
    out << j.dump() << '\n';
  }
}

}  // namespace gait
