#include "calibreg/data.hpp"

#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "calibreg/network.hpp"
#include "calibreg/rng.hpp"

namespace calibreg {

namespace {

// Stream ids for deterministic forking of a descriptor seed.
constexpr std::uint64_t kStreamMeans = 1;
constexpr std::uint64_t kStreamSamples = 2;

void require_blobs(const DatasetDescriptor& descriptor, const char* who) {
  if (descriptor.kind != DatasetKind::kBlobs) {
    throw std::invalid_argument(std::string(who) + ": only blobs descriptors supported");
  }
}

}  // namespace

Matrix class_means(const DatasetDescriptor& descriptor) {
  require_blobs(descriptor, "class_means");
  Rng rng = Rng(descriptor.seed).fork(kStreamMeans);
  const double rotation = rng.uniform() * 2.0 * std::numbers::pi;
  Matrix means(descriptor.k, descriptor.d);
  for (int c = 0; c < descriptor.k; ++c) {
    const double angle = rotation + 2.0 * std::numbers::pi * c / descriptor.k;
    means(c, 0) = std::cos(angle);
    means(c, 1) = std::sin(angle);
  }
  return means;
}

Dataset make_blobs(int k, std::size_t n, int d, double spread, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("make_blobs: k must be >= 2");
  if (d < 2) throw std::invalid_argument("make_blobs: d must be >= 2");
  if (n < 1) throw std::invalid_argument("make_blobs: n must be >= 1");
  if (!(spread > 0.0)) throw std::invalid_argument("make_blobs: spread must be > 0");

  Dataset ds;
  ds.descriptor = DatasetDescriptor{DatasetKind::kBlobs, k, n, d, spread, 0.0, seed};
  const Matrix means = class_means(ds.descriptor);

  Rng rng = Rng(seed).fork(kStreamSamples);
  ds.inputs = Matrix(n, d);
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int y = static_cast<int>(rng.below(static_cast<std::uint64_t>(k)));
    ds.labels[i] = y;
    double* row = ds.inputs.row(i);
    const double* mean = means.row(y);
    for (int j = 0; j < d; ++j) row[j] = mean[j] + spread * rng.gaussian();
  }
  return ds;
}

std::vector<double> true_posterior(const DatasetDescriptor& descriptor, const double* point) {
  require_blobs(descriptor, "true_posterior");
  const Matrix means = class_means(descriptor);
  const double inv_two_var = 1.0 / (2.0 * descriptor.spread * descriptor.spread);
  // Uniform priors: the posterior is the softmax of the Gaussian exponents.
  std::vector<double> scores(descriptor.k);
  for (int c = 0; c < descriptor.k; ++c) {
    double d2 = 0.0;
    const double* mean = means.row(c);
    for (int j = 0; j < descriptor.d; ++j) {
      const double diff = point[j] - mean[j];
      d2 += diff * diff;
    }
    scores[c] = -d2 * inv_two_var;
  }
  Matrix z(1, descriptor.k);
  std::copy(scores.begin(), scores.end(), z.data());
  const Matrix probs = softmax(z);
  return probs.row_copy(0);
}

Matrix true_posterior(const DatasetDescriptor& descriptor, const Matrix& points) {
  Matrix out(points.rows(), descriptor.k);
  for (std::size_t i = 0; i < points.rows(); ++i) {
    const auto p = true_posterior(descriptor, points.row(i));
    std::copy(p.begin(), p.end(), out.row(i));
  }
  return out;
}

Dataset make_two_moons(std::size_t n, double noise, std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("make_two_moons: n must be >= 2");
  if (noise < 0.0) throw std::invalid_argument("make_two_moons: noise must be >= 0");

  Dataset ds;
  ds.descriptor = DatasetDescriptor{DatasetKind::kTwoMoons, 2, n, 2, 0.0, noise, seed};
  const std::size_t n0 = n / 2;        // outer moon: floor(n/2)
  const std::size_t n1 = n - n0;       // inner moon: ceil(n/2)

  Rng rng = Rng(seed).fork(kStreamSamples);
  ds.inputs = Matrix(n, 2);
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n0; ++i) {
    const double t = std::numbers::pi * i / std::max<std::size_t>(n0 - 1, 1);
    ds.inputs(i, 0) = std::cos(t) + noise * rng.gaussian();
    ds.inputs(i, 1) = std::sin(t) + noise * rng.gaussian();
    ds.labels[i] = 0;
  }
  for (std::size_t i = 0; i < n1; ++i) {
    const double t = std::numbers::pi * i / std::max<std::size_t>(n1 - 1, 1);
    ds.inputs(n0 + i, 0) = 1.0 - std::cos(t) + noise * rng.gaussian();
    ds.inputs(n0 + i, 1) = 0.5 - std::sin(t) + noise * rng.gaussian();
    ds.labels[n0 + i] = 1;
  }
  return ds;
}

Matrix make_ood(const DatasetDescriptor& descriptor, std::size_t n, OodMode mode,
                std::uint64_t seed) {
  require_blobs(descriptor, "make_ood");
  if (n < 1) throw std::invalid_argument("make_ood: n must be >= 1");
  const Matrix means = class_means(descriptor);
  const double sigma = descriptor.spread;
  const int d = descriptor.d;
  Rng rng = Rng(seed).fork(kStreamSamples);
  Matrix out(n, d);

  switch (mode) {
    case OodMode::kShiftedMean: {
      // Push a class mean radially outward by 6 sigma; jitter within a
      // 1-sigma ball so every sample stays >= 5 sigma from every class mean.
      for (std::size_t i = 0; i < n; ++i) {
        const int c = static_cast<int>(rng.below(descriptor.k));
        const double* mean = means.row(c);
        const double radius = std::hypot(mean[0], mean[1]);
        double* row = out.row(i);
        std::vector<double> g(d);
        double norm_sq;
        do {
          norm_sq = 0.0;
          for (int j = 0; j < d; ++j) {
            g[j] = rng.gaussian();
            norm_sq += g[j] * g[j];
          }
        } while (norm_sq > 1.0);
        for (int j = 0; j < d; ++j) row[j] = mean[j] + sigma * g[j];
        row[0] += 6.0 * sigma * mean[0] / radius;
        row[1] += 6.0 * sigma * mean[1] / radius;
      }
      break;
    }
    case OodMode::kUniformBox: {
      // Shell between the inner box covering the support and its doubling.
      const double inner = 1.0 + 5.0 * sigma;
      const double outer = 2.0 * inner;
      for (std::size_t i = 0; i < n; ++i) {
        double* row = out.row(i);
        bool outside = false;
        while (!outside) {
          double max_abs = 0.0;
          for (int j = 0; j < d; ++j) {
            row[j] = (2.0 * rng.uniform() - 1.0) * outer;
            max_abs = std::max(max_abs, std::abs(row[j]));
          }
          outside = max_abs > inner;
        }
      }
      break;
    }
    case OodMode::kRing: {
      for (std::size_t i = 0; i < n; ++i) {
        const double rho = 1.0 + (6.0 + 2.0 * rng.uniform()) * sigma;
        const double angle = rng.uniform() * 2.0 * std::numbers::pi;
        double* row = out.row(i);
        row[0] = rho * std::cos(angle);
        row[1] = rho * std::sin(angle);
        for (int j = 2; j < d; ++j) row[j] = 0.0;
      }
      break;
    }
  }
  return out;
}

SplitResult split(const Dataset& dataset, const SplitSpec& spec) {
  const double sum = spec.train_fraction + spec.validation_fraction + spec.test_fraction;
  if (!(spec.train_fraction > 0.0 && spec.validation_fraction > 0.0 &&
        spec.test_fraction > 0.0)) {
    throw std::invalid_argument("split: fractions must be positive");
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw std::invalid_argument("split: fractions must sum to 1");
  }
  const std::size_t n = dataset.size();
  const std::size_t n_train = static_cast<std::size_t>(spec.train_fraction * n);
  const std::size_t n_val = static_cast<std::size_t>(spec.validation_fraction * n);
  const std::size_t n_test = n - n_train - n_val;
  if (n_train == 0 || n_val == 0 || n_test == 0) {
    throw std::invalid_argument("split: a fraction yields zero samples");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(spec.shuffle_seed);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = rng.below(i);
    std::swap(order[i - 1], order[j]);
  }

  auto take = [&](std::size_t begin, std::size_t count) {
    Dataset part;
    part.descriptor = dataset.descriptor;
    part.descriptor.n = count;
    part.inputs = Matrix(count, dataset.inputs.cols());
    part.labels.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t src = order[begin + i];
      std::copy(dataset.inputs.row(src), dataset.inputs.row(src) + dataset.inputs.cols(),
                part.inputs.row(i));
      part.labels[i] = dataset.labels[src];
    }
    return part;
  };

  SplitResult result;
  result.train = take(0, n_train);
  result.validation = take(n_train, n_val);
  result.test = take(n_train + n_val, n_test);
  return result;
}

const char* dataset_kind_name(DatasetKind k) {
  return k == DatasetKind::kBlobs ? "blobs" : "two_moons";
}

DatasetKind dataset_kind_from_name(const std::string& name) {
  if (name == "blobs") return DatasetKind::kBlobs;
  if (name == "two_moons") return DatasetKind::kTwoMoons;
  throw std::invalid_argument("unknown dataset kind: " + name);
}

const char* ood_mode_name(OodMode m) {
  switch (m) {
    case OodMode::kShiftedMean: return "shifted_mean";
    case OodMode::kUniformBox: return "uniform_box";
    case OodMode::kRing: return "ring";
  }
  return "shifted_mean";
}

OodMode ood_mode_from_name(const std::string& name) {
  if (name == "shifted_mean") return OodMode::kShiftedMean;
  if (name == "uniform_box") return OodMode::kUniformBox;
  if (name == "ring") return OodMode::kRing;
  throw std::invalid_argument("unknown OOD mode: " + name);
}

}  // namespace calibreg
