#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "adls/core.hpp"

namespace adls {

struct TreeNode {
  double value = 0.0;         // split threshold, or leaf prediction
  std::int32_t feature = -1;  // -1 marks a leaf
  std::uint32_t left = 0;
  std::uint32_t right = 0;
  std::uint32_t count = 0;  // training rows routed through this node
};

/// CART regression tree grown by exact variance-reduction splitting.
class RegressionTree {
 public:
  RegressionTree() = default;
  explicit RegressionTree(std::vector<TreeNode> nodes)
      : nodes_(std::move(nodes)) {}

  double predict(const double* features) const {
    const TreeNode* n = nodes_.data();
    std::uint32_t id = 0;
    while (n[id].feature >= 0)
      id = features[n[id].feature] <= n[id].value ? n[id].left : n[id].right;
    return n[id].value;
  }

  const std::vector<TreeNode>& nodes() const { return nodes_; }

 private:
  std::vector<TreeNode> nodes_;
};

/// Fits a single tree on (X, y):
///  - split = (feature, midpoint threshold) minimizing the summed child SSE,
///    enumerated over all features and all gaps between distinct sorted values;
///  - ties go to the lowest feature index, then the lowest threshold;
///  - growth stops when a node is pure, has < 2 rows, or no split helps;
///  - leaves predict the mean target.
RegressionTree fit_tree(const Eigen::MatrixXd& X, const Eigen::VectorXd& y);

class RegressionForest {
 public:
  RegressionForest() = default;
  RegressionForest(std::vector<RegressionTree> trees, int n_features,
                   std::uint64_t seed, Scenario scenario)
      : trees_(std::move(trees)),
        n_features_(n_features),
        seed_(seed),
        scenario_(scenario) {}

  const std::vector<RegressionTree>& trees() const { return trees_; }
  int n_trees() const { return static_cast<int>(trees_.size()); }
  int n_features() const { return n_features_; }
  std::uint64_t seed() const { return seed_; }
  Scenario scenario() const { return scenario_; }

 private:
  std::vector<RegressionTree> trees_;
  int n_features_ = 0;
  std::uint64_t seed_ = 0;
  Scenario scenario_ = Scenario::kDepthOnly;
};

/// Bagged forest: every tree sees its own bootstrap sample (with replacement,
/// same size as the training set) and considers all features at every split.
/// Tree t draws from a stream derived from (seed, t), so training is
/// bit-identical whether trees run serially or in parallel.
RegressionForest fit_forest(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                            int n_trees, std::uint64_t seed,
                            Scenario scenario = Scenario::kDepthOnly);

/// Column t holds tree t's predictions; rows follow X.
Eigen::MatrixXd predict_per_tree(const RegressionForest& forest,
                                 const Eigen::MatrixXd& X);

/// Row-means of predict_per_tree, bit-exactly.
Eigen::VectorXd predict_mean(const RegressionForest& forest,
                             const Eigen::MatrixXd& X);

/// Population variance (divide by M) across columns per row. Rows whose
/// entries all agree yield exactly 0. Throws for M < 2.
Eigen::VectorXd ensemble_variance(const Eigen::MatrixXd& per_tree);

// Forest container: magic "ADLS1", version u16, scenario u8, n_features u32,
// n_trees u32, then per tree a u32 node count and per node
// {feature i32 (-1 = leaf), threshold f64, left u32, right u32,
//  leaf prediction f64, count u32}. Little-endian throughout.
void serialize_forest(const RegressionForest& forest, std::ostream& out);
void serialize_forest(const RegressionForest& forest,
                      const std::filesystem::path& path);
RegressionForest deserialize_forest(std::istream& in);
RegressionForest deserialize_forest(const std::filesystem::path& path);

}  // namespace adls
