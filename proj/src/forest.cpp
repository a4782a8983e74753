#include "adls/forest.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "adls/parallel.hpp"
#include "adls/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "forest container I/O assumes a little-endian host");

namespace adls {

namespace {

// Grows one tree over `slots` (indices into a transposed feature cache).
// Feature orders are kept sorted per feature and stably partitioned at each
// split, so the whole build is O(features * rows * depth).
class TreeBuilder {
 public:
  TreeBuilder(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
              const std::vector<std::uint32_t>& rows)
      : n_(static_cast<std::uint32_t>(rows.size())),
        d_(static_cast<int>(X.cols())) {
    feat_.resize(static_cast<std::size_t>(d_) * n_);
    targets_.resize(n_);
    for (std::uint32_t s = 0; s < n_; ++s) targets_[s] = y[rows[s]];
    for (int f = 0; f < d_; ++f) {
      const double* col = X.col(f).data();
      double* dst = feat_.data() + static_cast<std::size_t>(f) * n_;
      for (std::uint32_t s = 0; s < n_; ++s) dst[s] = col[rows[s]];
    }
    order_.resize(static_cast<std::size_t>(d_) * n_);
    for (int f = 0; f < d_; ++f) {
      std::uint32_t* ord = order_.data() + static_cast<std::size_t>(f) * n_;
      std::iota(ord, ord + n_, 0u);
      const double* vals = feat_.data() + static_cast<std::size_t>(f) * n_;
      std::sort(ord, ord + n_, [vals](std::uint32_t a, std::uint32_t b) {
        return vals[a] < vals[b] || (vals[a] == vals[b] && a < b);
      });
    }
    shifted_.resize(n_);
    scratch_.resize(n_);
  }

  std::vector<TreeNode> build() {
    std::vector<TreeNode> nodes;
    nodes.reserve(2 * static_cast<std::size_t>(n_));

    struct Pending {
      std::uint32_t begin, end, parent;
      bool is_left;
    };
    std::vector<Pending> stack;
    constexpr std::uint32_t kNoParent = std::numeric_limits<std::uint32_t>::max();
    stack.push_back({0, n_, kNoParent, false});

    while (!stack.empty()) {
      const Pending p = stack.back();
      stack.pop_back();
      const auto id = static_cast<std::uint32_t>(nodes.size());
      nodes.emplace_back();
      if (p.parent != kNoParent) {
        if (p.is_left)
          nodes[p.parent].left = id;
        else
          nodes[p.parent].right = id;
      }
      const std::uint32_t m = p.end - p.begin;
      nodes[id].count = m;

      const Split split = find_split(p.begin, p.end);
      if (!split.found) {
        nodes[id].feature = -1;
        nodes[id].value = split.leaf_prediction;
        continue;
      }
      nodes[id].feature = split.feature;
      nodes[id].value = split.threshold;
      partition(p.begin, p.end, split);
      const std::uint32_t mid = p.begin + split.left_count;
      // Right first so the left child pops first (preorder node ids).
      stack.push_back({mid, p.end, id, false});
      stack.push_back({p.begin, mid, id, true});
    }
    return nodes;
  }

 private:
  struct Split {
    bool found = false;
    int feature = -1;
    double threshold = 0.0;
    std::uint32_t left_count = 0;
    double leaf_prediction = 0.0;
  };

  const double* feature_values(int f) const {
    return feat_.data() + static_cast<std::size_t>(f) * n_;
  }
  std::uint32_t* feature_order(int f) {
    return order_.data() + static_cast<std::size_t>(f) * n_;
  }

  Split find_split(std::uint32_t begin, std::uint32_t end) {
    Split out;
    const std::uint32_t m = end - begin;
    const std::uint32_t* seg = feature_order(0) + begin;

    const double first = targets_[seg[0]];
    bool all_equal = true;
    double sum = 0.0;
    for (std::uint32_t i = 0; i < m; ++i) {
      const double t = targets_[seg[i]];
      sum += t;
      all_equal = all_equal && (t == first);
    }
    if (all_equal || m < 2) {
      // A pure node predicts its target exactly, not a re-rounded mean.
      out.leaf_prediction = all_equal ? first : sum / m;
      return out;
    }
    const double mean = sum / m;
    out.leaf_prediction = mean;

    // Shift targets by the node mean; SSE sums stay well conditioned.
    double tot = 0.0, tot_sq = 0.0;
    for (std::uint32_t i = 0; i < m; ++i) {
      const std::uint32_t s = seg[i];
      const double z = targets_[s] - mean;
      shifted_[s] = z;
      tot += z;
      tot_sq += z * z;
    }
    const double parent_sse = tot_sq - tot * tot / m;

    double best_sse = parent_sse;
    for (int f = 0; f < d_; ++f) {
      const double* vals = feature_values(f);
      const std::uint32_t* ord = feature_order(f) + begin;
      double sum_left = 0.0, sumsq_left = 0.0;
      for (std::uint32_t i = 0; i + 1 < m; ++i) {
        const std::uint32_t s = ord[i];
        const double z = shifted_[s];
        sum_left += z;
        sumsq_left += z * z;
        const double v = vals[s];
        const double v_next = vals[ord[i + 1]];
        if (!(v_next > v)) continue;
        double thr = v + (v_next - v) * 0.5;
        if (!(thr < v_next)) thr = v;  // adjacent floats: split below v_next
        const std::uint32_t n_left = i + 1;
        const std::uint32_t n_right = m - n_left;
        const double sum_right = tot - sum_left;
        const double sumsq_right = tot_sq - sumsq_left;
        const double sse = (sumsq_left - sum_left * sum_left / n_left) +
                           (sumsq_right - sum_right * sum_right / n_right);
        if (sse < best_sse) {
          best_sse = sse;
          out.found = true;
          out.feature = f;
          out.threshold = thr;
          out.left_count = n_left;
        }
      }
    }
    return out;
  }

  void partition(std::uint32_t begin, std::uint32_t end, const Split& split) {
    const double* vals = feature_values(split.feature);
    for (int f = 0; f < d_; ++f) {
      std::uint32_t* ord = feature_order(f);
      std::uint32_t write = begin;
      std::uint32_t n_right = 0;
      for (std::uint32_t i = begin; i < end; ++i) {
        const std::uint32_t s = ord[i];
        if (vals[s] <= split.threshold)
          ord[write++] = s;
        else
          scratch_[n_right++] = s;
      }
      std::copy(scratch_.begin(), scratch_.begin() + n_right, ord + write);
    }
  }

  std::uint32_t n_;
  int d_;
  std::vector<double> feat_;    // transposed: feature-major, slot-minor
  std::vector<double> targets_;
  std::vector<std::uint32_t> order_;
  std::vector<double> shifted_;
  std::vector<std::uint32_t> scratch_;
};

RegressionTree fit_tree_on_rows(const Eigen::MatrixXd& X,
                                const Eigen::VectorXd& y,
                                const std::vector<std::uint32_t>& rows) {
  TreeBuilder builder(X, y, rows);
  return RegressionTree(builder.build());
}

}  // namespace

RegressionTree fit_tree(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  if (X.rows() == 0 || X.rows() != y.size())
    throw FitError("fit_tree requires a non-empty training set with |X| == |y|");
  if (!y.allFinite()) throw FitError("fit_tree targets must be finite");
  std::vector<std::uint32_t> rows(static_cast<std::size_t>(X.rows()));
  std::iota(rows.begin(), rows.end(), 0u);
  return fit_tree_on_rows(X, y, rows);
}

RegressionForest fit_forest(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                            int n_trees, std::uint64_t seed,
                            Scenario scenario) {
  if (n_trees < 1) throw FitError("forest needs at least one tree");
  if (X.rows() == 0 || X.rows() != y.size())
    throw FitError("fit_forest requires a non-empty training set with |X| == |y|");
  if (!y.allFinite()) throw FitError("fit_forest targets must be finite");

  const auto n = static_cast<std::uint64_t>(X.rows());
  std::vector<RegressionTree> trees(n_trees);
  parallel_for(0, n_trees, [&](std::int64_t tb, std::int64_t te) {
    std::vector<std::uint32_t> rows(n);
    for (std::int64_t t = tb; t < te; ++t) {
      Rng rng(derive_seed(seed, {stream::kTree, static_cast<std::uint64_t>(t)}));
      for (auto& r : rows) r = static_cast<std::uint32_t>(rng.below(n));
      trees[t] = fit_tree_on_rows(X, y, rows);
    }
  });
  return RegressionForest(std::move(trees), static_cast<int>(X.cols()), seed,
                          scenario);
}

Eigen::MatrixXd predict_per_tree(const RegressionForest& forest,
                                 const Eigen::MatrixXd& X) {
  if (X.cols() != forest.n_features())
    throw InvalidArgumentError("feature dimensionality mismatch");
  const auto n_rows = X.rows();
  const int n_trees = forest.n_trees();
  Eigen::MatrixXd out(n_rows, n_trees);
  parallel_for(0, n_rows, [&](std::int64_t rb, std::int64_t re) {
    std::vector<double> row(static_cast<std::size_t>(X.cols()));
    for (std::int64_t i = rb; i < re; ++i) {
      for (Eigen::Index f = 0; f < X.cols(); ++f) row[f] = X(i, f);
      for (int t = 0; t < n_trees; ++t)
        out(i, t) = forest.trees()[t].predict(row.data());
    }
  });
  return out;
}

Eigen::VectorXd predict_mean(const RegressionForest& forest,
                             const Eigen::MatrixXd& X) {
  return predict_per_tree(forest, X).rowwise().mean();
}

Eigen::VectorXd ensemble_variance(const Eigen::MatrixXd& per_tree) {
  const int m = static_cast<int>(per_tree.cols());
  if (m < 2)
    throw InvalidArgumentError(
        "ensemble variance needs at least two members");
  Eigen::VectorXd out(per_tree.rows());
  parallel_for(0, per_tree.rows(), [&](std::int64_t rb, std::int64_t re) {
    for (std::int64_t i = rb; i < re; ++i) {
      const double first = per_tree(i, 0);
      bool all_equal = true;
      double sum = 0.0;
      for (int t = 0; t < m; ++t) {
        const double v = per_tree(i, t);
        sum += v;
        all_equal = all_equal && (v == first);
      }
      if (all_equal) {
        out[i] = 0.0;
        continue;
      }
      const double mean = sum / m;
      double acc = 0.0;
      for (int t = 0; t < m; ++t) {
        const double z = per_tree(i, t) - mean;
        acc += z * z;
      }
      out[i] = acc / m;
    }
  });
  return out;
}

namespace {

constexpr char kMagic[5] = {'A', 'D', 'L', 'S', '1'};
constexpr std::uint16_t kVersion = 1;

std::uint8_t scenario_tag(Scenario s) {
  return s == Scenario::kRgbd ? 0 : 1;
}

Scenario scenario_from_tag(std::uint8_t tag) {
  if (tag == 0) return Scenario::kRgbd;
  if (tag == 1) return Scenario::kDepthOnly;
  throw FormatError("unknown scenario tag in forest container");
}

template <class T>
void write_raw(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T read_raw(std::istream& in) {
  T value;
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw CorruptError("truncated forest container");
  return value;
}

}  // namespace

void serialize_forest(const RegressionForest& forest, std::ostream& out) {
  out.write(kMagic, sizeof(kMagic));
  write_raw<std::uint16_t>(out, kVersion);
  write_raw<std::uint8_t>(out, scenario_tag(forest.scenario()));
  write_raw<std::uint32_t>(out, static_cast<std::uint32_t>(forest.n_features()));
  write_raw<std::uint32_t>(out, static_cast<std::uint32_t>(forest.n_trees()));
  for (const auto& tree : forest.trees()) {
    write_raw<std::uint32_t>(out,
                             static_cast<std::uint32_t>(tree.nodes().size()));
    for (const TreeNode& n : tree.nodes()) {
      const bool leaf = n.feature < 0;
      write_raw<std::int32_t>(out, n.feature);
      write_raw<double>(out, leaf ? 0.0 : n.value);
      write_raw<std::uint32_t>(out, n.left);
      write_raw<std::uint32_t>(out, n.right);
      write_raw<double>(out, leaf ? n.value : 0.0);
      write_raw<std::uint32_t>(out, n.count);
    }
  }
  if (!out) throw IoError("forest serialization failed");
}

void serialize_forest(const RegressionForest& forest,
                      const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  serialize_forest(forest, out);
}

RegressionForest deserialize_forest(std::istream& in) {
  char magic[5];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw FormatError("bad forest container magic");
  const auto version = read_raw<std::uint16_t>(in);
  if (version != kVersion)
    throw FormatError("unsupported forest container version " +
                      std::to_string(version));
  const Scenario scenario = scenario_from_tag(read_raw<std::uint8_t>(in));
  const auto n_features = read_raw<std::uint32_t>(in);
  const auto n_trees = read_raw<std::uint32_t>(in);
  if (n_features == 0 || n_trees == 0)
    throw FormatError("forest container must hold >= 1 feature and tree");

  std::vector<RegressionTree> trees;
  trees.reserve(n_trees);
  for (std::uint32_t t = 0; t < n_trees; ++t) {
    const auto n_nodes = read_raw<std::uint32_t>(in);
    if (n_nodes == 0) throw CorruptError("tree with zero nodes");
    std::vector<TreeNode> nodes(n_nodes);
    for (auto& n : nodes) {
      n.feature = read_raw<std::int32_t>(in);
      const double threshold = read_raw<double>(in);
      n.left = read_raw<std::uint32_t>(in);
      n.right = read_raw<std::uint32_t>(in);
      const double prediction = read_raw<double>(in);
      n.count = read_raw<std::uint32_t>(in);
      if (n.feature >= 0) {
        if (static_cast<std::uint32_t>(n.feature) >= n_features)
          throw CorruptError("split feature out of range");
        if (n.left >= n_nodes || n.right >= n_nodes)
          throw CorruptError("child node id out of range");
        n.value = threshold;
      } else {
        n.value = prediction;
      }
      if (!std::isfinite(n.value)) throw CorruptError("non-finite node value");
    }
    trees.emplace_back(std::move(nodes));
  }
  return RegressionForest(std::move(trees), static_cast<int>(n_features), 0,
                          scenario);
}

RegressionForest deserialize_forest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  return deserialize_forest(in);
}

}  // namespace adls
