#include "groklab/tasks.hpp"

#include "groklab/rng.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <numeric>

namespace groklab {

namespace {

constexpr std::uint64_t kStreamInputs = 1;
constexpr std::uint64_t kStreamRepresentation = 2;
constexpr std::uint64_t kStreamTargets = 3;
constexpr std::uint64_t kStreamSplit = 4;

void fill_normal(Matrix& m, Rng& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = nd(rng);
}

void check_messiness(double m) {
  if (!(m >= 0.0 && m <= 1.0)) throw DomainError("messiness m must lie in [0, 1]");
}

}  // namespace

MlpSpec teacher_student_spec() { return {{5, 100, 100, 5}, Activation::tanh, LossKind::mse}; }

TeacherStudentTask gen_teacher_student(std::uint64_t seed, int n_train, int n_test) {
  if (n_train < 1 || n_test < 1) throw DomainError("teacher-student sample counts must be >= 1");
  TeacherStudentTask task;
  task.teacher_spec = teacher_student_spec();
  task.teacher_params = init_params(task.teacher_spec, seed ^ kTeacherSeedSalt);

  Rng rng(derive_seed(seed, kStreamInputs));
  const int d_in = task.teacher_spec.input_width();
  task.train.inputs.resize(n_train, d_in);
  task.test.inputs.resize(n_test, d_in);
  fill_normal(task.train.inputs, rng);
  fill_normal(task.test.inputs, rng);
  task.train.targets = forward(task.teacher_spec, task.teacher_params, task.train.inputs);
  task.test.targets = forward(task.teacher_spec, task.teacher_params, task.test.inputs);
  return task;
}

MlpSpec addition_decoder_spec() {
  return {{1, 200, 200, kAdditionTargetDim}, Activation::relu, LossKind::mse, InitScheme::fan_in};
}

std::vector<AdditionPair> enumerate_pairs(int p) {
  if (p < 1) throw DomainError("addition base p must be >= 1");
  std::vector<AdditionPair> pairs;
  pairs.reserve(static_cast<std::size_t>(p) * (p + 1) / 2);
  for (int i = 0; i < p; ++i) {
    for (int j = i; j < p; ++j) pairs.push_back({i, j});
  }
  return pairs;
}

std::vector<double> make_representation(int p, double m, std::uint64_t seed) {
  if (p < 1) throw DomainError("addition base p must be >= 1");
  check_messiness(m);
  Rng rng(derive_seed(seed, kStreamRepresentation));
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<double> rep(p);
  for (int k = 0; k < p; ++k) {
    const double g = nd(rng);
    rep[k] = m * g + (1.0 - m) * static_cast<double>(k);
  }
  return rep;
}

AdditionTask gen_addition_task(int p, double m, int train_size, std::uint64_t seed) {
  AdditionTask task;
  task.p = p;
  task.m = m;
  task.seed = seed;
  task.pairs = enumerate_pairs(p);
  const int total = static_cast<int>(task.pairs.size());
  if (train_size < 1 || train_size > total) {
    throw DomainError("train size must lie in [1, " + std::to_string(total) + "]");
  }
  task.representation = make_representation(p, m, seed);

  auto targets = std::make_shared<Matrix>(task.num_classes(), kAdditionTargetDim);
  Rng target_rng(derive_seed(seed, kStreamTargets));
  fill_normal(*targets, target_rng);
  task.output_targets = std::move(targets);

  std::vector<std::size_t> order(task.pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng split_rng(derive_seed(seed ^ static_cast<std::uint64_t>(p), kStreamSplit));
  std::shuffle(order.begin(), order.end(), split_rng);
  task.train_indices.assign(order.begin(), order.begin() + train_size);
  task.test_indices.assign(order.begin() + train_size, order.end());
  std::sort(task.train_indices.begin(), task.train_indices.end());
  std::sort(task.test_indices.begin(), task.test_indices.end());
  return task;
}

Batch addition_batch(const AdditionTask& task, std::span<const std::size_t> indices,
                     std::span<const double> representation) {
  if (static_cast<int>(representation.size()) != task.p) {
    throw DomainError("representation length must equal p");
  }
  const auto n = static_cast<Eigen::Index>(indices.size());
  Batch b;
  b.inputs.resize(n, 1);
  b.targets.resize(n, kAdditionTargetDim);
  b.labels.resize(indices.size());
  for (Eigen::Index r = 0; r < n; ++r) {
    const AdditionPair& pr = task.pairs.at(indices[r]);
    b.inputs(r, 0) = representation[pr.i] + representation[pr.j];
    b.targets.row(r) = task.output_targets->row(pr.label());
    b.labels[r] = pr.label();
  }
  return b;
}

// ---------------------------------------------------------------------------
// IDX ingestion

namespace {

std::string idx_kind_name(IdxError::Kind k) {
  switch (k) {
    case IdxError::Kind::missing_file: return "missing file";
    case IdxError::Kind::bad_magic: return "bad magic number";
    case IdxError::Kind::truncated: return "truncated payload";
    case IdxError::Kind::bad_header: return "bad header";
  }
  return "error";
}

std::vector<std::uint8_t> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IdxError(IdxError::Kind::missing_file, path.string(), "cannot open");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& bytes, std::size_t offset,
                        const std::filesystem::path& path) {
  if (bytes.size() < offset + 4) {
    throw IdxError(IdxError::Kind::truncated, path.string(), "header ends early");
  }
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

}  // namespace

IdxError::IdxError(Kind kind, const std::string& file, const std::string& detail)
    : IoError(file + ": " + idx_kind_name(kind) + (detail.empty() ? "" : " (" + detail + ")")),
      kind_(kind),
      file_(file) {}

IdxImages read_idx_images(const std::filesystem::path& path) {
  const auto bytes = read_all(path);
  const std::uint32_t magic = read_be32(bytes, 0, path);
  if (magic != kIdxImageMagic) {
    throw IdxError(IdxError::Kind::bad_magic, path.string(),
                   "expected 2051, found " + std::to_string(magic));
  }
  IdxImages img;
  img.count = read_be32(bytes, 4, path);
  img.rows = read_be32(bytes, 8, path);
  img.cols = read_be32(bytes, 12, path);
  if (img.rows == 0 || img.cols == 0) {
    throw IdxError(IdxError::Kind::bad_header, path.string(), "zero image dimension");
  }
  const std::size_t payload = std::size_t{img.count} * img.rows * img.cols;
  if (bytes.size() < 16 + payload) {
    throw IdxError(IdxError::Kind::truncated, path.string(),
                   "expected " + std::to_string(payload) + " pixel bytes, found " +
                       std::to_string(bytes.size() - 16));
  }
  img.pixels.assign(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(payload));
  return img;
}

std::vector<std::uint8_t> read_idx_labels(const std::filesystem::path& path) {
  const auto bytes = read_all(path);
  const std::uint32_t magic = read_be32(bytes, 0, path);
  if (magic != kIdxLabelMagic) {
    throw IdxError(IdxError::Kind::bad_magic, path.string(),
                   "expected 2049, found " + std::to_string(magic));
  }
  const std::uint32_t count = read_be32(bytes, 4, path);
  if (bytes.size() < 8 + std::size_t{count}) {
    throw IdxError(IdxError::Kind::truncated, path.string(),
                   "expected " + std::to_string(count) + " labels, found " +
                       std::to_string(bytes.size() - 8));
  }
  return {bytes.begin() + 8, bytes.begin() + 8 + count};
}

MnistPaths MnistPaths::in_directory(const std::filesystem::path& dir) {
  auto pick = [&](const std::string& stem, const std::string& ext) {
    const auto dashed = dir / (stem + "-" + ext);
    const auto dotted = dir / (stem + "." + ext);
    if (!std::filesystem::exists(dashed) && std::filesystem::exists(dotted)) return dotted;
    return dashed;
  };
  return {pick("train-images", "idx3-ubyte"), pick("train-labels", "idx1-ubyte"),
          pick("t10k-images", "idx3-ubyte"), pick("t10k-labels", "idx1-ubyte")};
}

Batch mnist_batch(const IdxImages& images, std::span<const std::uint8_t> labels,
                  const std::string& context) {
  if (labels.size() != images.count) {
    throw IdxError(IdxError::Kind::bad_header, context,
                   std::to_string(images.count) + " images but " + std::to_string(labels.size()) +
                       " labels");
  }
  const auto n = static_cast<Eigen::Index>(images.count);
  const auto d = static_cast<Eigen::Index>(images.rows) * images.cols;
  Batch b;
  b.inputs.resize(n, d);
  for (Eigen::Index i = 0; i < n * d; ++i) b.inputs.data()[i] = images.pixels[i] / 255.0;
  b.targets = Matrix::Zero(n, kMnistClasses);
  b.labels.resize(labels.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const int y = labels[i];
    if (y >= kMnistClasses) {
      throw IdxError(IdxError::Kind::bad_header, context,
                     "label " + std::to_string(y) + " at index " + std::to_string(i));
    }
    b.labels[i] = y;
    b.targets(i, y) = 1.0;
  }
  return b;
}

MnistTask load_mnist(const MnistPaths& paths) {
  MnistTask task;
  task.train = mnist_batch(read_idx_images(paths.train_images), read_idx_labels(paths.train_labels),
                           paths.train_images.string());
  task.test = mnist_batch(read_idx_images(paths.test_images), read_idx_labels(paths.test_labels),
                          paths.test_images.string());
  return task;
}

std::vector<std::size_t> sample_indices(std::size_t population, std::size_t n, std::uint64_t seed) {
  if (n > population) {
    throw DomainError("cannot sample " + std::to_string(n) + " of " + std::to_string(population));
  }
  std::vector<std::size_t> idx(population);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, population - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(n);
  return idx;
}

Batch select_rows(const Batch& b, std::span<const std::size_t> rows) {
  Batch out;
  const auto n = static_cast<Eigen::Index>(rows.size());
  out.inputs.resize(n, b.inputs.cols());
  out.targets.resize(n, b.targets.cols());
  if (b.has_labels()) out.labels.resize(rows.size());
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto src = static_cast<Eigen::Index>(rows[r]);
    if (src >= b.size()) throw DomainError("row index out of range");
    out.inputs.row(r) = b.inputs.row(src);
    out.targets.row(r) = b.targets.row(src);
    if (b.has_labels()) out.labels[r] = b.labels[src];
  }
  return out;
}

Batch subset(const Batch& b, std::size_t n, std::uint64_t seed) {
  const auto rows = sample_indices(static_cast<std::size_t>(b.size()), n, seed);
  return select_rows(b, rows);
}

MnistTask subset(const MnistTask& task, std::size_t n, std::uint64_t seed) {
  return {subset(task.train, n, seed), task.test};
}

Batch mnist_interpolated(const Batch& b, double m) {
  check_messiness(m);
  if (!b.has_labels()) throw DomainError("representation interpolation requires labels");
  Batch out = b;
  for (Eigen::Index i = 0; i < b.size(); ++i) {
    const double linear = static_cast<double>(b.labels[i]) / 9.0;
    out.inputs.row(i) = m * b.inputs.row(i).array() + (1.0 - m) * linear;
  }
  return out;
}

MnistTask mnist_interpolated(const MnistTask& task, double m) {
  return {mnist_interpolated(task.train, m), mnist_interpolated(task.test, m)};
}

}  // namespace groklab
