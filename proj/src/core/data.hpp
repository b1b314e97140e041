#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gmm.hpp"
#include "metrics.hpp"
#include "probability.hpp"

namespace mhng {

struct Image {
  int height = 0;
  int width = 0;
  int channels = 1;
  /// Row-major, channel-interleaved, values in [0, 1].
  std::vector<double> pixels;

  double at(int row, int col, int ch = 0) const {
    return pixels[static_cast<std::size_t>((row * width + col) * channels + ch)];
  }
  double& at(int row, int col, int ch = 0) {
    return pixels[static_cast<std::size_t>((row * width + col) * channels + ch)];
  }
  bool operator==(const Image&) const = default;
};

struct ImageSet {
  std::vector<Image> images;
  LabelVector labels;
  std::string provenance;

  std::size_t size() const noexcept { return images.size(); }
  /// Throws on shape or range violations.
  void validate() const;
  /// One flattened image per column.
  Matrix to_matrix() const;
};

ImageSet load_mnist_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path);
void write_mnist_idx(const ImageSet& set, const std::filesystem::path& images_path,
                     const std::filesystem::path& labels_path);

/// Counter-clockwise rotation about the image centre, bilinear, zero fill.
Image rotate(const Image& img, double degrees);
ImageSet rotate_all(const ImageSet& set, double degrees);

/// n images of each listed class, selected and shuffled under rng.
ImageSet subset_per_class(const ImageSet& set, std::size_t n_per_class, const std::vector<int>& classes,
                          RngStream& rng);

struct SyntheticSpec {
  std::size_t k = 3;
  std::size_t d = 60;
  Eigen::Index l = 2;
  NWHyper hyper;
  std::uint64_t seed = 0;
};

struct SyntheticSample {
  std::vector<Vector> z_a;
  std::vector<Vector> z_b;
  LabelVector w_true;
  ComponentSet phi_a;
  ComponentSet phi_b;
};

/// Ancestral sampling from the two-agent Gaussian mixture: shared signs,
/// per-agent components and latents.
SyntheticSample synthesize_inter_gmm(const SyntheticSpec& spec);

Image resize_bilinear(const Image& img, int height, int width);

/// One sub-directory per class (sorted lexicographically); PGM, PPM and PNG files.
ImageSet load_image_folder(const std::filesystem::path& root, int height, int width);

Image read_image(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const Image& img);

}  // namespace mhng
