#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "calibreg/matrix.hpp"

namespace calibreg {

enum class DatasetKind { kBlobs, kTwoMoons };

/// Everything needed to regenerate a dataset bit-identically and, for blobs,
/// to evaluate the exact class posterior.
struct DatasetDescriptor {
  DatasetKind kind = DatasetKind::kBlobs;
  int k = 10;             // class count (2 for two_moons)
  std::size_t n = 10000;  // sample count
  int d = 16;             // input dimension (2 for two_moons)
  double spread = 0.22;   // blobs: Gaussian std around each class mean
  double noise = 0.1;     // two_moons: jitter std
  std::uint64_t seed = 0;
};

struct Dataset {
  Matrix inputs;  // n x d
  std::vector<int> labels;
  DatasetDescriptor descriptor;

  std::size_t size() const { return labels.size(); }
  int dim() const { return static_cast<int>(inputs.cols()); }
};

struct SplitSpec {
  double train_fraction = 0.8;
  double validation_fraction = 0.1;
  double test_fraction = 0.1;
  std::uint64_t shuffle_seed = 0;
};

struct SplitResult {
  Dataset train;
  Dataset validation;
  Dataset test;
};

/// Gaussian mixture with uniform class weights. Class means sit on the unit
/// circle in the first two input dimensions (zero elsewhere), rotated by a
/// seed-derived offset; inputs are N(mean_y, spread^2 I). The closed-form
/// posterior makes the calibration condition directly checkable.
Dataset make_blobs(int k, std::size_t n, int d, double spread, std::uint64_t seed);

/// Class means of a blobs descriptor (k x d), derived deterministically.
Matrix class_means(const DatasetDescriptor& descriptor);

/// Exact p(y | x) by Bayes' rule on the known mixture: softmax of the
/// Gaussian log-densities plus log-priors. Only blobs support this.
std::vector<double> true_posterior(const DatasetDescriptor& descriptor,
                                   const double* point);
/// Row-wise true posterior for a batch of points.
Matrix true_posterior(const DatasetDescriptor& descriptor, const Matrix& points);

/// Two interleaved half-circles with Gaussian jitter; K = 2, d = 2. Class
/// sizes are exactly floor(n/2) and ceil(n/2).
Dataset make_two_moons(std::size_t n, double noise, std::uint64_t seed);

enum class OodMode { kShiftedMean, kUniformBox, kRing };

/// Inputs with negligible density under the base blobs distribution:
/// shifted_mean pushes each class mean radially outward by 6 spread and
/// jitters inside a 1-spread ball (every sample ends >= 5 spread from every
/// class mean); uniform_box samples the shell between an inner box covering
/// the support and a box twice its size; ring samples radii in
/// [R + 6 spread, R + 8 spread] at uniform angles.
Matrix make_ood(const DatasetDescriptor& descriptor, std::size_t n, OodMode mode,
                std::uint64_t seed);

/// Disjoint exhaustive split with a seed-determined shuffle. Fractions must
/// be positive and sum to 1; a fraction yielding zero samples is an error.
SplitResult split(const Dataset& dataset, const SplitSpec& spec);

const char* dataset_kind_name(DatasetKind k);
DatasetKind dataset_kind_from_name(const std::string& name);
const char* ood_mode_name(OodMode m);
OodMode ood_mode_from_name(const std::string& name);

}  // namespace calibreg
