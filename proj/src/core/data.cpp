#include "data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <map>
#include <numbers>
#include <sstream>

#include <png.h>

#include "error.hpp"

namespace mhng {

namespace fs = std::filesystem;

namespace {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

std::vector<unsigned char> read_all(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t off, const fs::path& path) {
  if (off + 4 > b.size()) throw Error(ErrorCode::TruncatedFile, path.string() + ": header");
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
         std::uint32_t{b[off + 3]};
}

void put_be32(std::ostream& os, std::uint32_t v) {
  const std::array<char, 4> b = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                                 static_cast<char>(v)};
  os.write(b.data(), 4);
}

double sample_bilinear(const Image& img, double y, double x, int ch) {
  const int y0 = static_cast<int>(std::floor(y));
  const int x0 = static_cast<int>(std::floor(x));
  const double fy = y - y0, fx = x - x0;
  auto px = [&](int r, int c) {
    if (r < 0 || c < 0 || r >= img.height || c >= img.width) return 0.0;
    return img.at(r, c, ch);
  };
  return (1 - fy) * ((1 - fx) * px(y0, x0) + fx * px(y0, x0 + 1)) + fy * ((1 - fx) * px(y0 + 1, x0) + fx * px(y0 + 1, x0 + 1));
}

Image read_pnm(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::UnreadableImage, path.string());
  std::string magic;
  is >> magic;
  const int channels = magic == "P5" ? 1 : magic == "P6" ? 3 : 0;
  if (channels == 0) throw Error(ErrorCode::UnreadableImage, path.string() + ": unsupported PNM type " + magic);
  auto next_int = [&]() {
    int v = 0;
    is >> std::ws;
    while (is.peek() == '#') {
      std::string line;
      std::getline(is, line);
      is >> std::ws;
    }
    if (!(is >> v)) throw Error(ErrorCode::UnreadableImage, path.string() + ": bad header");
    return v;
  };
  Image img;
  img.width = next_int();
  img.height = next_int();
  img.channels = channels;
  const int maxval = next_int();
  is.get();
  if (img.width <= 0 || img.height <= 0 || maxval <= 0 || maxval > 255) {
    throw Error(ErrorCode::UnreadableImage, path.string() + ": bad dimensions");
  }
  const auto n = static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height) * static_cast<std::size_t>(channels);
  std::vector<unsigned char> raw(n);
  if (!is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n))) {
    throw Error(ErrorCode::UnreadableImage, path.string() + ": truncated pixel data");
  }
  img.pixels.resize(n);
  for (std::size_t i = 0; i < n; ++i) img.pixels[i] = raw[i] / static_cast<double>(maxval);
  return img;
}

Image read_png(const fs::path& path) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str())) {
    throw Error(ErrorCode::UnreadableImage, path.string() + ": " + png.message);
  }
  const bool gray = (png.format & PNG_FORMAT_FLAG_COLOR) == 0;
  png.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  std::vector<unsigned char> raw(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, raw.data(), 0, nullptr)) {
    png_image_free(&png);
    throw Error(ErrorCode::UnreadableImage, path.string() + ": " + png.message);
  }
  Image img;
  img.width = static_cast<int>(png.width);
  img.height = static_cast<int>(png.height);
  img.channels = gray ? 1 : 3;
  img.pixels.resize(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) img.pixels[i] = raw[i] / 255.0;
  return img;
}

}  // namespace

void ImageSet::validate() const {
  if (images.size() != labels.size()) throw Error(ErrorCode::CountMismatch, "images vs labels");
  for (const auto& img : images) {
    if (img.height <= 0 || img.width <= 0 || img.channels <= 0 ||
        img.pixels.size() != static_cast<std::size_t>(img.height * img.width * img.channels)) {
      throw Error(ErrorCode::ShapeMismatch, "image buffer does not match its shape");
    }
    if (img.height != images.front().height || img.width != images.front().width ||
        img.channels != images.front().channels) {
      throw Error(ErrorCode::ShapeMismatch, "images differ in shape");
    }
    for (const double p : img.pixels) {
      if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorCode::ShapeMismatch, "pixel outside [0, 1]");
    }
  }
}

Matrix ImageSet::to_matrix() const {
  if (images.empty()) return {};
  Matrix m(static_cast<Eigen::Index>(images.front().pixels.size()), static_cast<Eigen::Index>(images.size()));
  for (std::size_t d = 0; d < images.size(); ++d) {
    m.col(static_cast<Eigen::Index>(d)) = Eigen::Map<const Vector>(images[d].pixels.data(), m.rows());
  }
  return m;
}

ImageSet load_mnist_idx(const fs::path& images_path, const fs::path& labels_path) {
  const auto ib = read_all(images_path);
  const auto lb = read_all(labels_path);
  if (be32(ib, 0, images_path) != kIdxImagesMagic) throw Error(ErrorCode::BadMagic, images_path.string());
  if (be32(lb, 0, labels_path) != kIdxLabelsMagic) throw Error(ErrorCode::BadMagic, labels_path.string());
  const std::uint32_t count = be32(ib, 4, images_path);
  const std::uint32_t rows = be32(ib, 8, images_path);
  const std::uint32_t cols = be32(ib, 12, images_path);
  const std::uint32_t label_count = be32(lb, 4, labels_path);
  if (count != label_count) {
    throw Error(ErrorCode::CountMismatch, std::to_string(count) + " images vs " + std::to_string(label_count) + " labels");
  }
  const std::size_t pixels = std::size_t{rows} * cols;
  if (ib.size() < 16 + count * pixels) throw Error(ErrorCode::TruncatedFile, images_path.string());
  if (lb.size() < 8 + std::size_t{count}) throw Error(ErrorCode::TruncatedFile, labels_path.string());

  ImageSet set;
  set.provenance = "idx:" + images_path.filename().string();
  set.images.reserve(count);
  set.labels.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Image img{static_cast<int>(rows), static_cast<int>(cols), 1, std::vector<double>(pixels)};
    for (std::size_t p = 0; p < pixels; ++p) img.pixels[p] = ib[16 + i * pixels + p] / 255.0;
    set.images.push_back(std::move(img));
    const int label = lb[8 + i];
    if (label > 9) throw Error(ErrorCode::BadMagic, "label out of range in " + labels_path.string());
    set.labels.push_back(label);
  }
  return set;
}

void write_mnist_idx(const ImageSet& set, const fs::path& images_path, const fs::path& labels_path) {
  set.validate();
  std::ofstream io(images_path, std::ios::binary), lo(labels_path, std::ios::binary);
  if (!io || !lo) throw Error(ErrorCode::Io, "cannot write IDX files");
  const auto count = static_cast<std::uint32_t>(set.size());
  put_be32(io, kIdxImagesMagic);
  put_be32(io, count);
  put_be32(io, set.images.empty() ? 0 : static_cast<std::uint32_t>(set.images.front().height));
  put_be32(io, set.images.empty() ? 0 : static_cast<std::uint32_t>(set.images.front().width));
  for (const auto& img : set.images) {
    for (const double p : img.pixels) io.put(static_cast<char>(std::lround(p * 255.0)));
  }
  put_be32(lo, kIdxLabelsMagic);
  put_be32(lo, count);
  for (const int l : set.labels) lo.put(static_cast<char>(l));
}

Image rotate(const Image& img, double degrees) {
  if (degrees == 0.0) return img;
  Image out = img;
  const double rad = degrees * std::numbers::pi / 180.0;
  const double c = std::cos(rad), s = std::sin(rad);
  const double cy = 0.5 * (img.height - 1), cx = 0.5 * (img.width - 1);
  for (int r = 0; r < img.height; ++r) {
    for (int col = 0; col < img.width; ++col) {
      // Inverse map: output (x, y) with y pointing down; a positive angle turns
      // the content counter-clockwise on screen.
      const double dx = col - cx, dy = r - cy;
      const double sx = c * dx - s * dy + cx;
      const double sy = s * dx + c * dy + cy;
      for (int ch = 0; ch < img.channels; ++ch) {
        out.at(r, col, ch) = std::clamp(sample_bilinear(img, sy, sx, ch), 0.0, 1.0);
      }
    }
  }
  return out;
}

ImageSet rotate_all(const ImageSet& set, double degrees) {
  ImageSet out = set;
  for (auto& img : out.images) img = rotate(img, degrees);
  if (degrees != 0.0) {
    std::ostringstream p;
    p << set.provenance << "+rot" << degrees;
    out.provenance = p.str();
  }
  return out;
}

ImageSet subset_per_class(const ImageSet& set, std::size_t n_per_class, const std::vector<int>& classes,
                          RngStream& rng) {
  ImageSet out;
  out.provenance = set.provenance + "+subset";
  if (n_per_class == 0) return out;
  std::vector<std::size_t> picked;
  for (const int cls : classes) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < set.labels.size(); ++i) {
      if (set.labels[i] == cls) members.push_back(i);
    }
    if (members.size() < n_per_class) {
      throw Error(ErrorCode::InsufficientClassCount, "class " + std::to_string(cls) + " has " +
                                                         std::to_string(members.size()) + " < " +
                                                         std::to_string(n_per_class));
    }
    // Partial Fisher-Yates.
    for (std::size_t i = 0; i < n_per_class; ++i) {
      const std::size_t j = i + rng.uniform_index(members.size() - i);
      std::swap(members[i], members[j]);
      picked.push_back(members[i]);
    }
  }
  for (std::size_t i = picked.size(); i > 1; --i) std::swap(picked[i - 1], picked[rng.uniform_index(i)]);
  for (const std::size_t i : picked) {
    out.images.push_back(set.images[i]);
    out.labels.push_back(set.labels[i]);
  }
  return out;
}

SyntheticSample synthesize_inter_gmm(const SyntheticSpec& spec) {
  spec.hyper.validate();
  if (spec.k == 0 || spec.hyper.dim() != spec.l) throw Error(ErrorCode::InvalidConfig, "synthetic spec");
  RngStream rng(spec.seed);
  SyntheticSample s;
  s.w_true.resize(spec.d);
  for (auto& w : s.w_true) w = static_cast<int>(rng.uniform_index(spec.k));
  s.phi_a = sample_prior_components(spec.hyper, spec.k, rng);
  s.phi_b = sample_prior_components(spec.hyper, spec.k, rng);
  for (std::size_t d = 0; d < spec.d; ++d) {
    const auto& ca = s.phi_a.at(s.w_true[d]);
    const auto& cb = s.phi_b.at(s.w_true[d]);
    s.z_a.push_back(sample_mvn(ca.mu, ca.lambda, rng));
    s.z_b.push_back(sample_mvn(cb.mu, cb.lambda, rng));
  }
  return s;
}

Image resize_bilinear(const Image& img, int height, int width) {
  if (height == img.height && width == img.width) return img;
  Image out{height, width, img.channels, std::vector<double>(static_cast<std::size_t>(height * width * img.channels))};
  const double sy = static_cast<double>(img.height) / height, sx = static_cast<double>(img.width) / width;
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      // Pixel-centre alignment, clamped to the source border.
      const double y = std::clamp((r + 0.5) * sy - 0.5, 0.0, img.height - 1.0);
      const double x = std::clamp((c + 0.5) * sx - 0.5, 0.0, img.width - 1.0);
      for (int ch = 0; ch < img.channels; ++ch) out.at(r, c, ch) = std::clamp(sample_bilinear(img, y, x, ch), 0.0, 1.0);
    }
  }
  return out;
}

Image read_image(const fs::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  if (ext == ".png") return read_png(path);
  if (ext == ".pgm" || ext == ".ppm") return read_pnm(path);
  throw Error(ErrorCode::UnreadableImage, path.string() + ": unsupported extension");
}

ImageSet load_image_folder(const fs::path& root, int height, int width) {
  if (!fs::is_directory(root)) throw Error(ErrorCode::Io, root.string() + " is not a directory");
  std::vector<fs::path> class_dirs;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory()) class_dirs.push_back(e.path());
  }
  if (class_dirs.empty()) throw Error(ErrorCode::EmptyClass, root.string() + " has no class directories");
  std::sort(class_dirs.begin(), class_dirs.end());
  ImageSet set;
  set.provenance = "folder:" + root.string();
  for (std::size_t label = 0; label < class_dirs.size(); ++label) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(class_dirs[label])) {
      if (e.is_regular_file()) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw Error(ErrorCode::EmptyClass, class_dirs[label].string());
    for (const auto& f : files) {
      set.images.push_back(resize_bilinear(read_image(f), height, width));
      set.labels.push_back(static_cast<int>(label));
    }
  }
  set.validate();
  return set;
}

void write_pgm(const fs::path& path, const Image& img) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::Io, "cannot write " + path.string());
  const bool color = img.channels == 3;
  os << (color ? "P6" : "P5") << '\n' << img.width << ' ' << img.height << "\n255\n";
  const int channels = color ? 3 : 1;
  for (int r = 0; r < img.height; ++r) {
    for (int c = 0; c < img.width; ++c) {
      for (int ch = 0; ch < channels; ++ch) {
        os.put(static_cast<char>(std::lround(std::clamp(img.at(r, c, ch), 0.0, 1.0) * 255.0)));
      }
    }
  }
}

}  // namespace mhng
