#include "fedlab/datasets.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <numeric>

namespace fedlab {

namespace {

std::uint32_t read_be_u32(std::ifstream& in, const std::string& path,
                          std::size_t offset) {
  unsigned char buf[4];
  in.read(reinterpret_cast<char*>(buf), 4);
  if (!in) {
    throw DataFormatError(path + ": truncated header at offset " +
                          std::to_string(offset));
  }
  return (std::uint32_t(buf[0]) << 24) | (std::uint32_t(buf[1]) << 16) |
         (std::uint32_t(buf[2]) << 8) | std::uint32_t(buf[3]);
}

void shuffle_indices(std::vector<std::size_t>& idx, RngStream& rng) {
  for (std::size_t k = idx.size(); k > 1; --k) {
    const std::size_t j = rng.next_below(k);
    std::swap(idx[k - 1], idx[j]);
  }
}

std::vector<std::vector<std::size_t>> indices_by_class(
    const std::vector<int>& labels) {
  int classes = 0;
  for (int y : labels) classes = std::max(classes, y + 1);
  std::vector<std::vector<std::size_t>> by_class(classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    by_class[labels[i]].push_back(i);
  }
  return by_class;
}

void repair_empty_clients(std::vector<std::vector<std::size_t>>& assign) {
  for (auto& client : assign) {
    while (client.empty()) {
      auto largest = std::max_element(
          assign.begin(), assign.end(),
          [](const auto& a, const auto& b) { return a.size() < b.size(); });
      if (largest->size() <= 1) {
        throw ConfigError("cannot repair empty client: too few samples");
      }
      client.push_back(largest->back());
      largest->pop_back();
    }
  }
}

void check_client_count(std::size_t n_samples, int n_clients) {
  if (n_clients < 1) throw ConfigError("n_clients must be >= 1");
  if (static_cast<std::size_t>(n_clients) > n_samples) {
    throw ConfigError("n_clients (" + std::to_string(n_clients) +
                      ") exceeds sample count (" + std::to_string(n_samples) +
                      ")");
  }
}

}  // namespace

LabeledDataset load_idx(const std::string& images_path,
                        const std::string& labels_path) {
  std::ifstream img(images_path, std::ios::binary);
  if (!img) throw DataFormatError("cannot open " + images_path);
  const std::uint32_t img_magic = read_be_u32(img, images_path, 0);
  if (img_magic != 0x00000803u) {
    throw DataFormatError(images_path + ": bad image magic at offset 0 (got " +
                          std::to_string(img_magic) + ", want 2051)");
  }
  const std::uint32_t n = read_be_u32(img, images_path, 4);
  const std::uint32_t rows = read_be_u32(img, images_path, 8);
  const std::uint32_t cols = read_be_u32(img, images_path, 12);

  std::ifstream lab(labels_path, std::ios::binary);
  if (!lab) throw DataFormatError("cannot open " + labels_path);
  const std::uint32_t lab_magic = read_be_u32(lab, labels_path, 0);
  if (lab_magic != 0x00000801u) {
    throw DataFormatError(labels_path + ": bad label magic at offset 0 (got " +
                          std::to_string(lab_magic) + ", want 2049)");
  }
  const std::uint32_t n_lab = read_be_u32(lab, labels_path, 4);
  if (n != n_lab) {
    throw DataFormatError("image count " + std::to_string(n) +
                          " != label count " + std::to_string(n_lab));
  }

  const std::size_t features = std::size_t(rows) * cols;
  LabeledDataset ds;
  ds.inputs = DenseMatrix(n, features);
  ds.labels.resize(n);

  std::vector<unsigned char> pixel_row(features);
  for (std::uint32_t i = 0; i < n; ++i) {
    img.read(reinterpret_cast<char*>(pixel_row.data()), features);
    if (!img) {
      throw DataFormatError(images_path + ": truncated image data at offset " +
                            std::to_string(16 + std::size_t(i) * features));
    }
    double* out = ds.inputs.row(i);
    for (std::size_t k = 0; k < features; ++k) {
      out[k] = pixel_row[k] / 255.0;
    }
  }
  std::vector<unsigned char> raw_labels(n);
  lab.read(reinterpret_cast<char*>(raw_labels.data()), n);
  if (!lab) {
    throw DataFormatError(labels_path + ": truncated label data");
  }
  int classes = 0;
  for (std::uint32_t i = 0; i < n; ++i) {
    ds.labels[i] = raw_labels[i];
    classes = std::max(classes, ds.labels[i] + 1);
  }
  ds.class_count = classes;
  return ds;
}

Partition dirichlet_partition(const std::vector<int>& labels, int n_clients,
                              double concentration, RngStream rng) {
  check_client_count(labels.size(), n_clients);
  if (!(concentration > 0.0)) {
    throw ConfigError("dirichlet concentration must be > 0");
  }
  auto by_class = indices_by_class(labels);
  Partition part;
  part.assignments.assign(n_clients, {});

  std::vector<double> props(n_clients);
  std::vector<std::size_t> counts(n_clients);
  std::vector<int> order(n_clients);
  for (auto& class_idx : by_class) {
    if (class_idx.empty()) continue;
    shuffle_indices(class_idx, rng);
    double total = 0.0;
    for (int i = 0; i < n_clients; ++i) {
      props[i] = rng.next_gamma(concentration);
      total += props[i];
    }
    // Largest-remainder rounding of proportions into integer counts.
    const std::size_t n_c = class_idx.size();
    std::size_t assigned = 0;
    for (int i = 0; i < n_clients; ++i) {
      props[i] = props[i] / total * static_cast<double>(n_c);
      counts[i] = static_cast<std::size_t>(props[i]);
      assigned += counts[i];
    }
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      const double fa = props[a] - std::floor(props[a]);
      const double fb = props[b] - std::floor(props[b]);
      if (fa != fb) return fa > fb;
      return a < b;
    });
    for (std::size_t r = 0; assigned < n_c; ++r, ++assigned) {
      ++counts[order[r % n_clients]];
    }
    std::size_t cursor = 0;
    for (int i = 0; i < n_clients; ++i) {
      for (std::size_t k = 0; k < counts[i]; ++k) {
        part.assignments[i].push_back(class_idx[cursor++]);
      }
    }
  }
  repair_empty_clients(part.assignments);
  return part;
}

Partition stratified_iid_partition(const std::vector<int>& labels,
                                   int n_clients, RngStream rng) {
  check_client_count(labels.size(), n_clients);
  auto by_class = indices_by_class(labels);
  Partition part;
  part.assignments.assign(n_clients, {});
  std::size_t cursor = 0;
  for (auto& class_idx : by_class) {
    shuffle_indices(class_idx, rng);
    for (std::size_t i : class_idx) {
      part.assignments[cursor % n_clients].push_back(i);
      ++cursor;
    }
  }
  repair_empty_clients(part.assignments);
  return part;
}

std::vector<ObjectiveSpec> synthetic_quadratic_task(int n_clients, int dim,
                                                    double heterogeneity,
                                                    RngStream rng,
                                                    double l_max) {
  if (dim < 1) throw ConfigError("quadratic dim must be >= 1");
  if (n_clients < 1) throw ConfigError("n_clients must be >= 1");
  if (heterogeneity < 0.0) throw ConfigError("heterogeneity must be >= 0");

  using EMatrix = Eigen::MatrixXd;
  std::vector<ObjectiveSpec> specs;
  specs.reserve(n_clients);
  // Shared center component keeps the heterogeneity knob the only source of
  // cross-client spread.
  ParamVector shared_center(dim);
  for (int k = 0; k < dim; ++k) shared_center[k] = rng.next_normal();

  for (int i = 0; i < n_clients; ++i) {
    EMatrix gauss(dim, dim);
    for (int r = 0; r < dim; ++r) {
      for (int c = 0; c < dim; ++c) gauss(r, c) = rng.next_normal();
    }
    Eigen::HouseholderQR<EMatrix> qr(gauss);
    EMatrix q = qr.householderQ();
    Eigen::VectorXd eigs(dim);
    for (int k = 0; k < dim; ++k) {
      eigs(k) = 0.5 + (l_max - 0.5) * rng.next_double();
    }
    EMatrix a = q * eigs.asDiagonal() * q.transpose();

    ObjectiveSpec spec;
    spec.family = ObjectiveFamily::Quadratic;
    spec.quad_hessian = DenseMatrix(dim, dim);
    for (int r = 0; r < dim; ++r) {
      for (int c = 0; c < dim; ++c) {
        // Symmetrize against rounding drift.
        spec.quad_hessian.at(r, c) = 0.5 * (a(r, c) + a(c, r));
      }
    }
    spec.quad_center.resize(dim);
    for (int k = 0; k < dim; ++k) {
      spec.quad_center[k] = shared_center[k] + heterogeneity * rng.next_normal();
    }
    specs.push_back(std::move(spec));
  }
  return specs;
}

LabeledDataset synthetic_classification_data(int n_samples, int features,
                                             int classes, RngStream rng) {
  if (n_samples < 1 || features < 1 || classes < 2) {
    throw ConfigError("synthetic data needs n_samples>=1, features>=1, classes>=2");
  }
  DenseMatrix means(classes, features);
  for (int c = 0; c < classes; ++c) {
    for (int f = 0; f < features; ++f) {
      means.at(c, f) = 2.0 * rng.next_normal();
    }
  }
  LabeledDataset ds;
  ds.class_count = classes;
  ds.inputs = DenseMatrix(n_samples, features);
  ds.labels.resize(n_samples);
  for (int i = 0; i < n_samples; ++i) {
    const int y = static_cast<int>(rng.next_below(classes));
    ds.labels[i] = y;
    double* row = ds.inputs.row(i);
    for (int f = 0; f < features; ++f) {
      row[f] = means.at(y, f) + rng.next_normal();
    }
  }
  return ds;
}

ParamVector quadratic_global_minimizer(const std::vector<ObjectiveSpec>& specs) {
  if (specs.empty()) throw ConfigError("no quadratic specs");
  const int dim = static_cast<int>(specs.front().quad_center.size());
  Eigen::MatrixXd a_sum = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::VectorXd b_sum = Eigen::VectorXd::Zero(dim);
  for (const auto& spec : specs) {
    Eigen::MatrixXd a(dim, dim);
    Eigen::VectorXd center(dim);
    for (int r = 0; r < dim; ++r) {
      center(r) = spec.quad_center[r];
      for (int c = 0; c < dim; ++c) a(r, c) = spec.quad_hessian.at(r, c);
    }
    a_sum += a;
    b_sum += a * center;
  }
  Eigen::VectorXd x = a_sum.ldlt().solve(b_sum);
  ParamVector out(dim);
  for (int k = 0; k < dim; ++k) out[k] = x(k);
  return out;
}

}  // namespace fedlab
