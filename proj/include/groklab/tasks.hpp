#pragma once

// Task constructors: teacher-student regression, scalar-embedded addition
// and MNIST (IDX ingestion plus representation interpolation).

#include "groklab/errors.hpp"
#include "groklab/nn.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace groklab {

// ---------------------------------------------------------------------------
// Teacher-student

MlpSpec teacher_student_spec();

struct TeacherStudentTask {
  MlpSpec teacher_spec;
  ParamVector teacher_params;
  Batch train;
  Batch test;
  double theta = 0.01;
};

// Teacher drawn at the standard scale from seed ^ kTeacherSeedSalt; inputs
// i.i.d. N(0, 1) from an independent stream.
TeacherStudentTask gen_teacher_student(std::uint64_t seed, int n_train = 100, int n_test = 100);

inline constexpr std::uint64_t kTeacherSeedSalt = 0x7EAC4E125EEDULL;

// ---------------------------------------------------------------------------
// Addition with scalar representations

inline constexpr int kAdditionTargetDim = 30;

MlpSpec addition_decoder_spec();

struct AdditionPair {
  int i = 0;
  int j = 0;
  int label() const { return i + j; }
};

// All unordered pairs 0 <= i <= j < p in lexicographic order.
std::vector<AdditionPair> enumerate_pairs(int p);

// E_k = m G_k + (1 - m) k with G_k ~ N(0, 1) fixed by seed.
std::vector<double> make_representation(int p, double m, std::uint64_t seed);

struct AdditionTask {
  int p = 10;
  double m = 0.0;
  std::uint64_t seed = 0;
  std::vector<AdditionPair> pairs;
  std::vector<double> representation;        // E_0 .. E_{p-1}
  std::shared_ptr<const Matrix> output_targets;  // (2p-1) x 30, row k is target of label k
  std::vector<std::size_t> train_indices;    // into pairs
  std::vector<std::size_t> test_indices;

  int num_classes() const { return 2 * p - 1; }
  AccuracyMode accuracy_mode() const { return AccuracyMode::nearest(output_targets); }
};

// The split permutation depends only on (p, seed), so training sets of
// different sizes drawn with one seed are nested.
AdditionTask gen_addition_task(int p, double m, int train_size, std::uint64_t seed);

// Decoder batch for the selected pairs: input E_i + E_j, target row of i + j.
Batch addition_batch(const AdditionTask& task, std::span<const std::size_t> indices,
                     std::span<const double> representation);
inline Batch addition_train_batch(const AdditionTask& t) {
  return addition_batch(t, t.train_indices, t.representation);
}
inline Batch addition_test_batch(const AdditionTask& t) {
  return addition_batch(t, t.test_indices, t.representation);
}

// ---------------------------------------------------------------------------
// MNIST

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;  // 2051
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;  // 2049

class IdxError : public IoError {
 public:
  enum class Kind { missing_file, bad_magic, truncated, bad_header };
  IdxError(Kind kind, const std::string& file, const std::string& detail);
  Kind kind() const noexcept { return kind_; }
  const std::string& file() const noexcept { return file_; }

 private:
  Kind kind_;
  std::string file_;
};

struct IdxImages {
  std::uint32_t count = 0;
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<std::uint8_t> pixels;  // count * rows * cols, row-major per image
};

IdxImages read_idx_images(const std::filesystem::path& path);
std::vector<std::uint8_t> read_idx_labels(const std::filesystem::path& path);

struct MnistPaths {
  std::filesystem::path train_images;
  std::filesystem::path train_labels;
  std::filesystem::path test_images;
  std::filesystem::path test_labels;

  // Accepts both "train-images-idx3-ubyte" and "train-images.idx3-ubyte".
  static MnistPaths in_directory(const std::filesystem::path& dir);
};

struct MnistTask {
  Batch train;
  Batch test;
};

inline constexpr int kMnistClasses = 10;

// Pixels scaled by 1/255, one-hot targets (1 for the true class, 0 elsewhere).
MnistTask load_mnist(const MnistPaths& paths);

// Builds a labelled batch from raw IDX content; used by load_mnist.
Batch mnist_batch(const IdxImages& images, std::span<const std::uint8_t> labels,
                  const std::string& context);

// Seed-determined uniform sample of n rows without replacement.
std::vector<std::size_t> sample_indices(std::size_t population, std::size_t n, std::uint64_t seed);
Batch select_rows(const Batch& b, std::span<const std::size_t> rows);
Batch subset(const Batch& b, std::size_t n, std::uint64_t seed);
// Subsamples the training split only.
MnistTask subset(const MnistTask& task, std::size_t n, std::uint64_t seed);

// Each input row becomes m raw + (1 - m) (label / 9) on every pixel.
MnistTask mnist_interpolated(const MnistTask& task, double m);
Batch mnist_interpolated(const Batch& b, double m);

}  // namespace groklab
