#pragma once

#include <string>
#include <vector>

#include "fedlab/models.hpp"
#include "fedlab/numkit.hpp"

namespace fedlab {

struct LabeledDataset {
  DenseMatrix inputs;       // n x features, values in [0, 1] for image data
  std::vector<int> labels;  // n entries in [0, class_count)
  int class_count = 0;

  std::size_t size() const { return labels.size(); }
};

// Disjoint per-client index lists covering {0..n-1} exactly.
struct Partition {
  std::vector<std::vector<std::size_t>> assignments;
};

// Reads an IDX image/label file pair (big-endian magic 0x00000803 for images,
// 0x00000801 for labels). Pixels are scaled by 1/255.
LabeledDataset load_idx(const std::string& images_path,
                        const std::string& labels_path);

// Label-skew split: per class, proportions drawn from a symmetric Dirichlet
// and converted to counts by largest-remainder rounding; empty clients are
// repaired by stealing one sample from the largest client.
Partition dirichlet_partition(const std::vector<int>& labels, int n_clients,
                              double concentration, RngStream rng);

// Round-robin class-stratified split; the IID reading of the third setting.
Partition stratified_iid_partition(const std::vector<int>& labels,
                                   int n_clients, RngStream rng);

// Per-client quadratics f_i(t) = 0.5 (t - t_i*)^T A_i (t - t_i*) with centers
// spread proportionally to `heterogeneity` and A_i eigenvalues in
// [0.5, l_max].
std::vector<ObjectiveSpec> synthetic_quadratic_task(int n_clients, int dim,
                                                    double heterogeneity,
                                                    RngStream rng,
                                                    double l_max = 4.0);

// Gaussian class blobs for the synthetic logistic task.
LabeledDataset synthetic_classification_data(int n_samples, int features,
                                             int classes, RngStream rng);

// Exact global minimizer of the mean of per-client quadratics.
ParamVector quadratic_global_minimizer(const std::vector<ObjectiveSpec>& specs);

}  // namespace fedlab
