#include "scn/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace scn::data {

namespace {

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw FormatError("cannot open '" + path + "'");
  const std::streamsize size = in.tellg();
  in.seekg(0);
  std::vector<unsigned char> bytes(static_cast<std::size_t>(size));
  if (!in.read(reinterpret_cast<char*>(bytes.data()), size))
    throw FormatError("read failed for '" + path + "'");
  return bytes;
}

std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t off) {
  return (static_cast<std::uint32_t>(b[off]) << 24) |
         (static_cast<std::uint32_t>(b[off + 1]) << 16) |
         (static_cast<std::uint32_t>(b[off + 2]) << 8) |
         static_cast<std::uint32_t>(b[off + 3]);
}

constexpr std::uint32_t kIdxImageMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

std::vector<layers::FeatureMap> parse_idx_images(const std::string& path) {
  const auto bytes = read_file(path);
  if (bytes.size() < 16)
    throw FormatError("'" + path + "': too short for an IDX image header");
  const std::uint32_t magic = be32(bytes, 0);
  if (magic != kIdxImageMagic) {
    std::ostringstream os;
    os << "'" << path << "': bad magic 0x" << std::hex << magic
       << " at offset 0 (want 0x803)";
    throw FormatError(os.str());
  }
  const std::uint32_t count = be32(bytes, 4);
  const std::uint32_t rows = be32(bytes, 8);
  const std::uint32_t cols = be32(bytes, 12);
  const std::size_t expected = 16 + static_cast<std::size_t>(count) * rows * cols;
  if (bytes.size() != expected) {
    std::ostringstream os;
    os << "'" << path << "': expected " << expected << " bytes, file has "
       << bytes.size();
    throw FormatError(os.str());
  }
  std::vector<layers::FeatureMap> images(count);
  std::size_t off = 16;
  for (std::uint32_t s = 0; s < count; ++s) {
    images[s] = layers::FeatureMap(1, static_cast<int>(rows), static_cast<int>(cols));
    for (std::size_t i = 0; i < static_cast<std::size_t>(rows) * cols; ++i, ++off)
      images[s].data[i] = static_cast<Real>(bytes[off]) / Real(255);
  }
  return images;
}

std::vector<int> parse_idx_labels(const std::string& path) {
  const auto bytes = read_file(path);
  if (bytes.size() < 8)
    throw FormatError("'" + path + "': too short for an IDX label header");
  const std::uint32_t magic = be32(bytes, 0);
  if (magic != kIdxLabelMagic) {
    std::ostringstream os;
    os << "'" << path << "': bad magic 0x" << std::hex << magic
       << " at offset 0 (want 0x801)";
    throw FormatError(os.str());
  }
  const std::uint32_t count = be32(bytes, 4);
  if (bytes.size() != 8 + static_cast<std::size_t>(count)) {
    std::ostringstream os;
    os << "'" << path << "': expected " << 8 + count << " bytes, file has "
       << bytes.size();
    throw FormatError(os.str());
  }
  std::vector<int> labels(count);
  for (std::uint32_t s = 0; s < count; ++s) labels[s] = bytes[8 + s];
  return labels;
}

Dataset assemble(std::vector<layers::FeatureMap> images, std::vector<int> labels,
                 Split split, int class_count, const std::string& what) {
  if (images.size() != labels.size())
    throw FormatError(what + ": image/label count mismatch (" +
                      std::to_string(images.size()) + " vs " +
                      std::to_string(labels.size()) + ")");
  for (int l : labels)
    if (l < 0 || l >= class_count)
      throw FormatError(what + ": label " + std::to_string(l) + " out of range");
  Dataset ds;
  ds.images = std::move(images);
  ds.labels = std::move(labels);
  ds.split = split;
  ds.class_count = class_count;
  return ds;
}

} // namespace

DatasetPair load_mnist(const std::string& dir) {
  DatasetPair pair;
  pair.train = assemble(parse_idx_images(dir + "/train-images-idx3-ubyte"),
                        parse_idx_labels(dir + "/train-labels-idx1-ubyte"),
                        Split::kTrain, 10, "mnist train");
  pair.test = assemble(parse_idx_images(dir + "/t10k-images-idx3-ubyte"),
                       parse_idx_labels(dir + "/t10k-labels-idx1-ubyte"),
                       Split::kTest, 10, "mnist test");
  pair.train.per_pixel_mean = compute_per_pixel_mean(pair.train.images);
  pair.test.per_pixel_mean = pair.train.per_pixel_mean;
  return pair;
}

namespace {

constexpr int kCifarDim = 32;
constexpr std::size_t kCifarPixels = 3 * kCifarDim * kCifarDim;

void parse_cifar_file(const std::string& path, int label_bytes, int label_index,
                      std::size_t expected_records,
                      std::vector<layers::FeatureMap>& images,
                      std::vector<int>& labels) {
  const auto bytes = read_file(path);
  const std::size_t record = static_cast<std::size_t>(label_bytes) + kCifarPixels;
  if (bytes.size() != expected_records * record) {
    std::ostringstream os;
    os << "'" << path << "': expected " << expected_records << " records of "
       << record << " bytes (" << expected_records * record << " total), file has "
       << bytes.size();
    throw FormatError(os.str());
  }
  std::size_t off = 0;
  for (std::size_t r = 0; r < expected_records; ++r) {
    labels.push_back(bytes[off + static_cast<std::size_t>(label_index)]);
    off += static_cast<std::size_t>(label_bytes);
    layers::FeatureMap img(3, kCifarDim, kCifarDim);
    for (std::size_t i = 0; i < kCifarPixels; ++i, ++off)
      img.data[i] = static_cast<Real>(bytes[off]) / Real(255);
    images.push_back(std::move(img));
  }
}

} // namespace

DatasetPair load_cifar(const std::string& dir, int classes) {
  if (classes != 10 && classes != 100)
    throw ContractError("load_cifar: classes must be 10 or 100");
  DatasetPair pair;
  std::vector<layers::FeatureMap> train_images, test_images;
  std::vector<int> train_labels, test_labels;
  if (classes == 10) {
    for (int b = 1; b <= 5; ++b)
      parse_cifar_file(dir + "/data_batch_" + std::to_string(b) + ".bin", 1, 0,
                       10000, train_images, train_labels);
    parse_cifar_file(dir + "/test_batch.bin", 1, 0, 10000, test_images, test_labels);
  } else {
    // CIFAR-100 records carry coarse then fine label; we train on fine.
    parse_cifar_file(dir + "/train.bin", 2, 1, 50000, train_images, train_labels);
    parse_cifar_file(dir + "/test.bin", 2, 1, 10000, test_images, test_labels);
  }
  pair.train = assemble(std::move(train_images), std::move(train_labels),
                        Split::kTrain, classes, "cifar train");
  pair.test = assemble(std::move(test_images), std::move(test_labels), Split::kTest,
                       classes, "cifar test");
  pair.train.per_pixel_mean = compute_per_pixel_mean(pair.train.images);
  pair.test.per_pixel_mean = pair.train.per_pixel_mean;
  return pair;
}

layers::FeatureMap compute_per_pixel_mean(const std::vector<layers::FeatureMap>& images) {
  if (images.empty()) throw ContractError("compute_per_pixel_mean: empty set");
  layers::FeatureMap mean(images.front().channels, images.front().height,
                          images.front().width);
  for (const auto& img : images) {
    if (!img.same_shape(mean))
      throw ContractError("compute_per_pixel_mean: inconsistent image shapes");
    for (std::size_t i = 0; i < mean.size(); ++i) mean.data[i] += img.data[i];
  }
  const Real inv = Real(1) / static_cast<Real>(images.size());
  for (Real& v : mean.data) v *= inv;
  return mean;
}

void truncate_train(DatasetPair& ds, std::size_t n) {
  if (n == 0 || n >= ds.train.images.size()) return;
  ds.train.images.resize(n);
  ds.train.labels.resize(n);
  ds.train.per_pixel_mean = compute_per_pixel_mean(ds.train.images);
  ds.test.per_pixel_mean = ds.train.per_pixel_mean;
}

// ---------------------------------------------------------------------------
// Synthetic digit corpus
// ---------------------------------------------------------------------------

namespace {

// 7x5 glyph bitmaps; some digits have a second stroke variant.
const char* const kGlyphs[10][2] = {
    {".###."
     "#...#"
     "#...#"
     "#...#"
     "#...#"
     "#...#"
     ".###.",
     ".###."
     "#..##"
     "#.#.#"
     "#.#.#"
     "##..#"
     "#...#"
     ".###."},
    {"..#.."
     ".##.."
     "..#.."
     "..#.."
     "..#.."
     "..#.."
     ".###.",
     "...#."
     "...#."
     "...#."
     "...#."
     "...#."
     "...#."
     "...#."},
    {".###."
     "#...#"
     "....#"
     "...#."
     "..#.."
     ".#..."
     "#####",
     ".###."
     "#...#"
     "....#"
     "..##."
     ".#..."
     "#...."
     "#####"},
    {".###."
     "#...#"
     "....#"
     "..##."
     "....#"
     "#...#"
     ".###.",
     "####."
     "....#"
     "....#"
     ".###."
     "....#"
     "....#"
     "####."},
    {"...#."
     "..##."
     ".#.#."
     "#..#."
     "#####"
     "...#."
     "...#.",
     "#...#"
     "#...#"
     "#...#"
     "#####"
     "....#"
     "....#"
     "....#"},
    {"#####"
     "#...."
     "####."
     "....#"
     "....#"
     "#...#"
     ".###.",
     "#####"
     "#...."
     "#...."
     "####."
     "....#"
     "#...#"
     ".###."},
    {".###."
     "#...."
     "#...."
     "####."
     "#...#"
     "#...#"
     ".###.",
     "..##."
     ".#..."
     "#...."
     "####."
     "#...#"
     "#...#"
     ".###."},
    {"#####"
     "....#"
     "...#."
     "...#."
     "..#.."
     "..#.."
     "..#..",
     "#####"
     "....#"
     "...#."
     ".####"
     "..#.."
     ".#..."
     ".#..."},
    {".###."
     "#...#"
     "#...#"
     ".###."
     "#...#"
     "#...#"
     ".###.",
     ".###."
     "#...#"
     "#...#"
     "..#.."
     "#...#"
     "#...#"
     ".###."},
    {".###."
     "#...#"
     "#...#"
     ".####"
     "....#"
     "....#"
     ".###.",
     ".###."
     "#...#"
     "#...#"
     ".####"
     "....#"
     "...#."
     ".##.."}};

constexpr int kGlyphH = 7;
constexpr int kGlyphW = 5;
constexpr int kDigitSide = 28;

Real glyph_at(const char* glyph, Real gi, Real gj) {
  // Bilinear sample of the binary bitmap; zero outside.
  const int i0 = static_cast<int>(std::floor(gi));
  const int j0 = static_cast<int>(std::floor(gj));
  const Real fi = gi - static_cast<Real>(i0);
  const Real fj = gj - static_cast<Real>(j0);
  auto v = [&](int i, int j) -> Real {
    if (i < 0 || i >= kGlyphH || j < 0 || j >= kGlyphW) return Real(0);
    return glyph[i * kGlyphW + j] == '#' ? Real(1) : Real(0);
  };
  return v(i0, j0) * (1 - fi) * (1 - fj) + v(i0, j0 + 1) * (1 - fi) * fj +
         v(i0 + 1, j0) * fi * (1 - fj) + v(i0 + 1, j0 + 1) * fi * fj;
}

layers::FeatureMap render_digit(int digit, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const int variant = uni(rng) < 0.5 ? 0 : 1;
  const char* glyph = kGlyphs[digit][variant];

  const double target_h = 15.0 + 7.0 * uni(rng);           // 15..22 px tall
  const double aspect = 0.85 + 0.3 * uni(rng);              // width jitter
  const double sy = target_h / kGlyphH;
  const double sx = target_h * (double(kGlyphW) / kGlyphH) * aspect / kGlyphW;
  const double theta = (uni(rng) - 0.5) * 0.5;              // +-0.25 rad
  const double shear = (uni(rng) - 0.5) * 0.5;
  const double off_i = (uni(rng) - 0.5) * 6.0;              // +-3 px
  const double off_j = (uni(rng) - 0.5) * 6.0;
  const double ink = 0.7 + 0.3 * uni(rng);

  // Inverse map: image-centered -> unscale(unshear(unrotate())) -> glyph.
  const double ct = std::cos(theta), st = std::sin(theta);
  const double ci = kDigitSide / 2.0 + off_i, cj = kDigitSide / 2.0 + off_j;

  layers::FeatureMap img(1, kDigitSide, kDigitSide);
  for (int i = 0; i < kDigitSide; ++i) {
    for (int j = 0; j < kDigitSide; ++j) {
      const double pi = (i + 0.5) - ci, pj = (j + 0.5) - cj;
      const double ri = ct * pi + st * pj;
      const double rj = -st * pi + ct * pj;
      const double ui = ri;
      const double uj = rj - shear * ri;
      const double gi = ui / sy + kGlyphH / 2.0 - 0.5;
      const double gj = uj / sx + kGlyphW / 2.0 - 0.5;
      img.at(0, i, j) = static_cast<Real>(
          ink * glyph_at(glyph, static_cast<Real>(gi), static_cast<Real>(gj)));
    }
  }

  // One 3x3 binomial smoothing pass, then pixel noise.
  layers::FeatureMap smooth(1, kDigitSide, kDigitSide);
  static const double kKernel[3] = {0.25, 0.5, 0.25};
  for (int i = 0; i < kDigitSide; ++i)
    for (int j = 0; j < kDigitSide; ++j) {
      double acc = 0;
      for (int di = -1; di <= 1; ++di)
        for (int dj = -1; dj <= 1; ++dj) {
          const int ii = i + di, jj = j + dj;
          if (ii < 0 || ii >= kDigitSide || jj < 0 || jj >= kDigitSide) continue;
          acc += kKernel[di + 1] * kKernel[dj + 1] * img.at(0, ii, jj);
        }
      smooth.at(0, i, j) = static_cast<Real>(acc);
    }

  const double sigma = 0.02 + 0.04 * uni(rng);
  std::normal_distribution<double> noise(0.0, sigma);
  for (Real& v : smooth.data)
    v = std::clamp(v + static_cast<Real>(noise(rng)), Real(0), Real(1));
  return smooth;
}

Dataset synth_split(int count, Split split, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Dataset ds;
  ds.split = split;
  ds.class_count = 10;
  ds.images.reserve(count);
  ds.labels.reserve(count);
  std::vector<int> order(count);
  for (int i = 0; i < count; ++i) order[i] = i % 10; // balanced
  std::shuffle(order.begin(), order.end(), rng);
  for (int i = 0; i < count; ++i) {
    ds.labels.push_back(order[i]);
    ds.images.push_back(render_digit(order[i], rng));
  }
  return ds;
}

} // namespace

DatasetPair make_synth_digits(const SynthDigitsOptions& opts) {
  DatasetPair pair;
  pair.train = synth_split(opts.train_count, Split::kTrain, opts.seed);
  pair.test = synth_split(opts.test_count, Split::kTest, opts.seed ^ 0x9e3779b97f4a7c15ULL);
  pair.train.per_pixel_mean = compute_per_pixel_mean(pair.train.images);
  pair.test.per_pixel_mean = pair.train.per_pixel_mean;
  return pair;
}

} // namespace scn::data
