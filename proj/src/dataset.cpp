#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>

#include <fmt/format.h>

#include "gait/dataset.hpp"
#include "gait/error.hpp"

namespace gait {

namespace fs = std::filesystem;

std::string_view to_string(Role role) { return role == Role::kProbe ? "probe" : "gallery"; }

Role parse_role(std::string_view text) {
  if (text == "probe") return Role::kProbe;
  if (text == "gallery") return Role::kGallery;
  throw std::invalid_argument("unknown role '" + std::string(text) + "'");
}

Image binarize(const Image& image, float threshold) {
  Image out = image;
  for (float& v : out.values()) v = v >= threshold ? 1.0f : 0.0f;
  return out;
}

Image resize_bilinear(const Image& image, std::size_t height, std::size_t width) {
  if (image.rank() != 2) throw ShapeError("resize_bilinear: expected [H,W] image");
  const std::size_t ih = image.dim(0), iw = image.dim(1);
  Image out({height, width});
  const double sy = static_cast<double>(ih) / static_cast<double>(height);
  const double sx = static_cast<double>(iw) / static_cast<double>(width);
  for (std::size_t y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(ih - 1));
    const std::size_t y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, ih - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(iw - 1));
      const std::size_t x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, iw - 1);
      const double wx = fx - static_cast<double>(x0);
      const double top = image[y0 * iw + x0] * (1 - wx) + image[y0 * iw + x1] * wx;
      const double bot = image[y1 * iw + x0] * (1 - wx) + image[y1 * iw + x1] * wx;
      out[y * width + x] = static_cast<float>(top * (1 - wy) + bot * wy);
    }
  }
  return out;
}

Image normalize_frame(const Image& raw, std::size_t size) {
  return binarize(resize_bilinear(binarize(raw), size, size));
}

SilhouetteSequence load_sequence(const fs::path& dir, std::size_t size) {
  if (!fs::is_directory(dir)) throw DataError("sequence directory not found: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename() < b.filename(); });
  if (files.size() < 2) {
    throw DataError(fmt::format("{}: need at least 2 frames for a temporal difference, found {}",
                                dir.string(), files.size()));
  }

  SilhouetteSequence seq;
  const fs::path canon = fs::weakly_canonical(dir);
  seq.subject_id = canon.filename().string();
  try {
    const int view = std::stoi(canon.filename().string());
    const Role role = parse_role(canon.parent_path().filename().string());
    seq.view = view;
    seq.role = role;
    seq.subject_id = canon.parent_path().parent_path().filename().string();
  } catch (const std::exception&) {
    // Not in dataset layout; keep the directory name as the subject.
  }
  seq.frames.reserve(files.size());
  for (const auto& f : files) seq.frames.push_back(normalize_frame(read_png_gray(f), size));
  return seq;
}

std::vector<Tensor> make_step_inputs(const SilhouetteSequence& seq,
                                     std::optional<std::size_t> max_steps) {
  if (seq.frames.size() < 2) {
    throw DataError("sequence " + seq.subject_id + " has fewer than 2 frames");
  }
  std::size_t steps = seq.frames.size() - 1;
  if (max_steps) steps = std::min(steps, *max_steps);
  const std::size_t h = seq.frames[0].dim(0), w = seq.frames[0].dim(1);
  const std::size_t plane = h * w;
  std::vector<Tensor> out;
  out.reserve(steps);
  for (std::size_t t = 1; t <= steps; ++t) {
    const Image& cur = seq.frames[t];
    const Image& prev = seq.frames[t - 1];
    require_shape(cur.shape(), prev.shape(), "make_step_inputs frame");
    Tensor step({2, h, w});
    for (std::size_t i = 0; i < plane; ++i) {
      step[i] = cur[i];
      step[plane + i] = cur[i] - prev[i];
    }
    out.push_back(std::move(step));
  }
  return out;
}

std::vector<std::string> Dataset::subjects() const {
  std::set<std::string> s;
  for (const auto& seq : sequences) s.insert(seq.subject_id);
  return {s.begin(), s.end()};
}

std::vector<int> Dataset::views() const {
  std::set<int> s;
  for (const auto& seq : sequences) s.insert(seq.view);
  return {s.begin(), s.end()};
}

std::optional<std::size_t> Dataset::find(std::string_view subject, Role role, int view) const {
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    const auto& s = sequences[i];
    if (s.role == role && s.view == view && s.subject_id == subject) return i;
  }
  return std::nullopt;
}

Dataset Dataset::subset(std::span<const std::string> subjects) const {
  const std::set<std::string> keep(subjects.begin(), subjects.end());
  Dataset out;
  for (const auto& seq : sequences) {
    if (keep.contains(seq.subject_id)) out.sequences.push_back(seq);
  }
  return out;
}

Dataset load_dataset(const fs::path& root, std::size_t size) {
  if (!fs::is_directory(root)) throw DataError("dataset root not found: " + root.string());
  std::vector<fs::path> dirs;
  for (const auto& subject : fs::directory_iterator(root)) {
    if (!subject.is_directory()) continue;
    for (const char* role : {"probe", "gallery"}) {
      const fs::path role_dir = subject.path() / role;
      if (!fs::is_directory(role_dir)) continue;
      for (const auto& view : fs::directory_iterator(role_dir)) {
        if (view.is_directory()) dirs.push_back(view.path());
      }
    }
  }
  Dataset ds;
  for (const auto& d : dirs) ds.sequences.push_back(load_sequence(d, size));
  std::sort(ds.sequences.begin(), ds.sequences.end(), [](const auto& a, const auto& b) {
    return std::tie(a.subject_id, a.role, a.view) < std::tie(b.subject_id, b.role, b.view);
  });
  if (ds.sequences.empty()) throw DataError("no sequences found under " + root.string());
  return ds;
}

void write_dataset(const Dataset& dataset, const fs::path& root) {
  fs::create_directories(root);
  std::ofstream manifest(root / "manifest.csv", std::ios::trunc);
  if (!manifest) throw DataError("cannot write manifest under " + root.string());
  manifest << "subject_id,role,view,path,frame_count\n";
  for (const auto& seq : dataset.sequences) {
    const fs::path rel = fs::path(seq.subject_id) / std::string(to_string(seq.role)) /
                         std::to_string(seq.view);
    fs::create_directories(root / rel);
    for (std::size_t t = 0; t < seq.frames.size(); ++t) {
      write_png_gray(root / rel / fmt::format("{:03d}.png", t), seq.frames[t]);
    }
    manifest << fmt::format("{},{},{},{},{}\n", seq.subject_id, to_string(seq.role), seq.view,
                            rel.generic_string(), seq.frames.size());
  }
}

}  // namespace gait
