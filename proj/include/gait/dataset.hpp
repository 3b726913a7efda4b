#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gait/tensor.hpp"

namespace gait {

enum class Role { kProbe, kGallery };

std::string_view to_string(Role role);
Role parse_role(std::string_view text);

// Grayscale image stored as a [H,W] tensor with values in [0,1].
using Image = Tensor;

/// Ordered silhouette frames of one subject, role and view, all of the same
/// square size.
struct SilhouetteSequence {
  std::string subject_id;
  Role role = Role::kProbe;
  int view = 0;
  std::vector<Image> frames;
};

// 8-bit grayscale PNG <-> [H,W] image in [0,1]. Colour inputs are converted to
// gray on read. Throws DataError naming the file.
Image read_png_gray(const std::filesystem::path& path);
void write_png_gray(const std::filesystem::path& path, const Image& image);

Image binarize(const Image& image, float threshold = 0.5f);
// Half-pixel-centre bilinear interpolation with edge clamping.
Image resize_bilinear(const Image& image, std::size_t height, std::size_t width);
// binarize -> bilinear resize to size x size -> re-threshold at 0.5.
Image normalize_frame(const Image& raw, std::size_t size);

/// Loads every *.png in `dir` in lexicographic filename order and normalizes it
/// to size x size. Subject, role and view are taken from a
/// `<subject>/<probe|gallery>/<view>` path suffix when present.
/// Fewer than two frames is a DataError.
SilhouetteSequence load_sequence(const std::filesystem::path& dir, std::size_t size = 126);

/// Two-channel inputs for t = 1..frames-1: channel 0 = frame t, channel 1 =
/// frame t - frame t-1. `max_steps` keeps only the first steps.
std::vector<Tensor> make_step_inputs(const SilhouetteSequence& seq,
                                     std::optional<std::size_t> max_steps = std::nullopt);

struct Dataset {
  std::vector<SilhouetteSequence> sequences;

  // Sorted, unique.
  std::vector<std::string> subjects() const;
  std::vector<int> views() const;
  std::optional<std::size_t> find(std::string_view subject, Role role, int view) const;
  // Sequences whose subject is in `subjects`, in dataset order.
  Dataset subset(std::span<const std::string> subjects) const;
};

/// Reads `root/<subject>/<probe|gallery>/<view>/<frame>.png`, sorted by
/// (subject, role, view).
Dataset load_dataset(const std::filesystem::path& root, std::size_t size = 126);

/// Writes frames as `root/<subject>/<role>/<view>/NNN.png` plus `manifest.csv`.
void write_dataset(const Dataset& dataset, const std::filesystem::path& root);

}  // namespace gait
