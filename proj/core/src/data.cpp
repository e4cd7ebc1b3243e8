#include "fade/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "fade/error.hpp"

namespace fade::data {

ad::Value LabeledSet::batch(std::span<const std::size_t> indices) const {
  const std::size_t sz = image_size();
  std::vector<double> out(indices.size() * sz);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= size()) throw BoundsError("sample index out of range");
    std::copy_n(images.begin() + static_cast<std::ptrdiff_t>(indices[i] * sz), sz,
                out.begin() + static_cast<std::ptrdiff_t>(i * sz));
  }
  return ad::Value::constant({indices.size(), channels, height, width}, std::move(out));
}

std::vector<int> LabeledSet::batch_labels(std::span<const std::size_t> indices) const {
  std::vector<int> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(labels.at(i));
  return out;
}

LabeledSet LabeledSet::subset(std::span<const std::size_t> indices) const {
  LabeledSet s{channels, height, width, classes, {}, {}};
  const std::size_t sz = image_size();
  s.images.reserve(indices.size() * sz);
  for (auto i : indices) {
    if (i >= size()) throw BoundsError("sample index out of range");
    s.images.insert(s.images.end(), images.begin() + static_cast<std::ptrdiff_t>(i * sz),
                    images.begin() + static_cast<std::ptrdiff_t>((i + 1) * sz));
    s.labels.push_back(labels[i]);
  }
  return s;
}

std::vector<std::size_t> LabeledSet::class_counts() const {
  std::vector<std::size_t> counts(classes, 0);
  for (int y : labels) ++counts.at(static_cast<std::size_t>(y));
  return counts;
}

LabeledSet parse_cifar10(std::span<const std::uint8_t> bytes) {
  if (bytes.empty()) throw FormatError("CIFAR-10 data is empty");
  if (bytes.size() % kCifarRecordBytes != 0)
    throw FormatError("CIFAR-10 data size " + std::to_string(bytes.size()) + " is not a multiple of " +
                      std::to_string(kCifarRecordBytes));
  const std::size_t n = bytes.size() / kCifarRecordBytes;
  const std::size_t px = kCifarRecordBytes - 1;
  LabeledSet set{3, kCifarSide, kCifarSide, kCifarClasses, std::vector<double>(n * px), std::vector<int>(n)};
  for (std::size_t r = 0; r < n; ++r) {
    const std::uint8_t* rec = bytes.data() + r * kCifarRecordBytes;
    if (rec[0] >= kCifarClasses)
      throw FormatError("CIFAR-10 record " + std::to_string(r) + " has label " + std::to_string(rec[0]));
    set.labels[r] = rec[0];
    for (std::size_t i = 0; i < px; ++i) set.images[r * px + i] = rec[1 + i] / 255.0;
  }
  return set;
}

std::vector<std::uint8_t> encode_cifar10(const LabeledSet& set) {
  if (set.channels != 3 || set.height != kCifarSide || set.width != kCifarSide)
    throw ShapeError("CIFAR-10 records hold 3x32x32 images");
  const std::size_t px = kCifarRecordBytes - 1;
  std::vector<std::uint8_t> out(set.size() * kCifarRecordBytes);
  for (std::size_t r = 0; r < set.size(); ++r) {
    std::uint8_t* rec = out.data() + r * kCifarRecordBytes;
    rec[0] = static_cast<std::uint8_t>(set.labels[r]);
    for (std::size_t i = 0; i < px; ++i)
      rec[1 + i] = static_cast<std::uint8_t>(std::lround(std::clamp(set.images[r * px + i], 0.0, 1.0) * 255.0));
  }
  return out;
}

LabeledSet load_cifar10_file(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw FormatError("cannot open " + file.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return parse_cifar10(bytes);
  } catch (const FormatError& e) {
    throw FormatError(file.string() + ": " + e.what());
  }
}

LabeledSet concat(const LabeledSet& a, const LabeledSet& b) {
  if (a.size() == 0) return b;
  if (b.size() == 0) return a;
  if (a.image_size() != b.image_size() || a.classes != b.classes) throw ShapeError("concat: incompatible sets");
  LabeledSet out = a;
  out.images.insert(out.images.end(), b.images.begin(), b.images.end());
  out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
  return out;
}

LabeledSet load_cifar10(const std::filesystem::path& dir, bool include_test_batch) {
  LabeledSet all;
  std::vector<std::string> names;
  for (int i = 1; i <= 5; ++i) names.push_back("data_batch_" + std::to_string(i) + ".bin");
  if (include_test_batch) names.push_back("test_batch.bin");
  bool any = false;
  for (const auto& name : names) {
    const auto file = dir / name;
    if (!std::filesystem::exists(file)) continue;
    all = concat(all, load_cifar10_file(file));
    any = true;
  }
  if (!any) throw FormatError("no CIFAR-10 batch files found in " + dir.string());
  return all;
}

LabeledSet downsample(const LabeledSet& set, std::size_t factor) {
  if (factor == 0 || set.height % factor || set.width % factor)
    throw ConfigError("downsample factor must divide the image size");
  if (factor == 1) return set;
  const std::size_t H = set.height / factor, W = set.width / factor;
  LabeledSet out{set.channels, H, W, set.classes, std::vector<double>(set.size() * set.channels * H * W), set.labels};
  const double inv = 1.0 / static_cast<double>(factor * factor);
  for (std::size_t nc = 0; nc < set.size() * set.channels; ++nc)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) {
        double s = 0.0;
        for (std::size_t dy = 0; dy < factor; ++dy)
          for (std::size_t dx = 0; dx < factor; ++dx)
            s += set.images[nc * set.height * set.width + (y * factor + dy) * set.width + x * factor + dx];
        out.images[nc * H * W + y * W + x] = s * inv;
      }
  return out;
}

namespace {

// Per-class sample counts for each part. Part totals follow the largest
// remainder rule; every class then receives floor or ceil of its share.
std::vector<std::array<std::size_t, 3>> split_quotas(const std::vector<std::size_t>& class_sizes,
                                                     std::array<int, 3> ratios) {
  const double parts = ratios[0] + ratios[1] + ratios[2];
  std::size_t total = 0;
  for (auto n : class_sizes) total += n;

  std::array<std::size_t, 3> target{};
  std::array<double, 3> frac{};
  std::size_t assigned = 0;
  for (std::size_t j = 0; j < 3; ++j) {
    const double exact = static_cast<double>(total) * ratios[j] / parts;
    target[j] = static_cast<std::size_t>(std::floor(exact));
    frac[j] = exact - static_cast<double>(target[j]);
    assigned += target[j];
  }
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return frac[a] > frac[b]; });
  for (std::size_t i = 0; assigned < total; ++i, ++assigned) ++target[order[i % 3]];

  std::vector<std::array<std::size_t, 3>> q(class_sizes.size());
  std::vector<std::array<double, 3>> rem(class_sizes.size());
  std::vector<std::size_t> extra(class_sizes.size());
  std::array<std::size_t, 3> need = target;
  for (std::size_t c = 0; c < class_sizes.size(); ++c) {
    std::size_t used = 0;
    for (std::size_t j = 0; j < 3; ++j) {
      const double exact = static_cast<double>(class_sizes[c]) * ratios[j] / parts;
      q[c][j] = static_cast<std::size_t>(std::floor(exact));
      rem[c][j] = exact - static_cast<double>(q[c][j]);
      used += q[c][j];
      need[j] -= q[c][j];
    }
    extra[c] = class_sizes[c] - used;
  }
  std::vector<std::size_t> classes(class_sizes.size());
  std::iota(classes.begin(), classes.end(), 0);
  std::stable_sort(classes.begin(), classes.end(), [&](auto a, auto b) { return extra[a] > extra[b]; });
  for (auto c : classes) {
    for (std::size_t k = 0; k < extra[c]; ++k) {
      std::size_t best = 3;
      for (std::size_t j = 0; j < 3; ++j) {
        if (q[c][j] > static_cast<std::size_t>(std::floor(static_cast<double>(class_sizes[c]) * ratios[j] / parts)))
          continue;  // already rounded up
        if (best == 3 || need[j] > need[best] || (need[j] == need[best] && rem[c][j] > rem[c][best])) best = j;
      }
      ++q[c][best];
      if (need[best] > 0) --need[best];
    }
  }
  return q;
}

}  // namespace

DatasetSplits split(const LabeledSet& set, std::array<int, 3> ratios, Rng& rng) {
  for (int r : ratios)
    if (r <= 0) throw ConfigError("split ratios must be positive");
  const int parts = ratios[0] + ratios[1] + ratios[2];
  if (set.size() < set.classes * static_cast<std::size_t>(parts))
    throw ConfigError("dataset with " + std::to_string(set.size()) + " samples is too small for " +
                      std::to_string(set.classes) + " classes and " + std::to_string(parts) + " parts");
  std::vector<std::vector<std::size_t>> by_class(set.classes);
  for (std::size_t i = 0; i < set.size(); ++i) by_class.at(static_cast<std::size_t>(set.labels[i])).push_back(i);
  std::vector<std::size_t> sizes;
  for (const auto& m : by_class) sizes.push_back(m.size());
  const auto quotas = split_quotas(sizes, ratios);
  std::array<std::vector<std::size_t>, 3> picks;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& members = by_class[c];
    std::shuffle(members.begin(), members.end(), rng);
    auto it = members.begin();
    for (std::size_t j = 0; j < 3; ++j) {
      const auto n = static_cast<std::ptrdiff_t>(quotas[c][j]);
      picks[j].insert(picks[j].end(), it, it + n);
      it += n;
    }
  }
  for (auto& p : picks) std::shuffle(p.begin(), p.end(), rng);
  return {set.subset(picks[0]), set.subset(picks[1]), set.subset(picks[2])};
}

LabeledSet make_xor_patterns(const XorTaskParams& params, Rng& rng) {
  if (params.side < 4) throw ConfigError("xor patterns need images of side >= 4");
  const std::size_t S = params.side;
  LabeledSet set{1, S, S, 2, std::vector<double>(params.samples * S * S), std::vector<int>(params.samples)};
  std::normal_distribution<double> noise(0.0, params.noise);
  std::bernoulli_distribution coin(0.5);
  for (std::size_t n = 0; n < params.samples; ++n) {
    double* img = set.images.data() + n * S * S;
    for (std::size_t i = 0; i < S * S; ++i) img[i] = noise(rng);
    const double a = coin(rng) ? 1.0 : -1.0;
    const double b = coin(rng) ? 1.0 : -1.0;
    for (std::size_t y = 0; y < 2; ++y)
      for (std::size_t x = 0; x < 2; ++x) {
        img[y * S + x] += a;
        img[(S - 1 - y) * S + (S - 1 - x)] += b;
      }
    set.labels[n] = a == b ? 1 : 0;
  }
  return set;
}

LabeledSet make_spaced_pairs(std::size_t samples, std::size_t height, std::size_t width, double noise_std,
                             Rng& rng) {
  if (width < 4 || height < 1) throw ConfigError("spaced pairs need width >= 4 and height >= 1");
  const std::size_t H = height, W = width;
  LabeledSet set{1, H, W, 2, std::vector<double>(samples * H * W), std::vector<int>(samples)};
  std::normal_distribution<double> noise(0.0, noise_std);
  std::bernoulli_distribution coin(0.5);
  std::uniform_int_distribution<std::size_t> span_dist(4, W);
  for (std::size_t n = 0; n < samples; ++n) {
    double* img = set.images.data() + n * H * W;
    for (std::size_t i = 0; i < H * W; ++i) img[i] = noise(rng);
    const std::size_t span = span_dist(rng);
    const std::size_t x0 = std::uniform_int_distribution<std::size_t>(0, W - span)(rng);
    const double a = coin(rng) ? 1.0 : -1.0;
    const double b = coin(rng) ? 1.0 : -1.0;
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t dx = 0; dx < 2; ++dx) {
        img[y * W + x0 + dx] += a;
        img[y * W + x0 + span - 2 + dx] += b;
      }
    set.labels[n] = a == b ? 1 : 0;
  }
  return set;
}

graph::Dag chain_dag(int n) {
  std::vector<graph::Edge> edges;
  for (int v = 0; v + 1 < n; ++v) edges.push_back({v, v + 1});
  return graph::Dag(n, std::move(edges));
}

double PlantedTask::planted_score(std::span<const std::size_t> path) const {
  if (path.size() != variants.size()) throw BoundsError("planted_score: path length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < path.size(); ++i)
    s += static_cast<double>(variants[i].at(path[i]).edge_count());
  return s;
}

PlantedTask make_planted_cell_quality(const PlantedTaskParams& params, Rng& rng) {
  if (params.depth < 1 || params.width < 1) throw ConfigError("planted task needs depth, width >= 1");
  if (params.width > static_cast<std::size_t>(graph::kMaxEnumerationVertices - 1))
    throw ConfigError("planted task supports width <= 5");
  PlantedTask task;
  task.data = make_spaced_pairs(params.samples, params.height, params.width_px, params.noise, rng);
  std::vector<graph::Dag> row;
  for (std::size_t k = 0; k < params.width; ++k) row.push_back(chain_dag(static_cast<int>(k) + 1));
  task.variants.assign(params.depth, row);
  task.dominant = params.width - 1;
  return task;
}

double ConcaveOracle::operator()(const graph::FeaturePoint& x) const {
  double d2 = 0.0;
  for (std::size_t k = 0; k < graph::kFeatureDims; ++k) d2 += (x[k] - optimum[k]) * (x[k] - optimum[k]);
  return std::clamp(1.0 - d2, 0.0, 1.0);
}

}  // namespace fade::data
