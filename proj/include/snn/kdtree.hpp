#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "snn/error.hpp"

namespace snn {

/// Static kd-tree over the rows of a point matrix, exact k-nearest-neighbor
/// queries under Euclidean distance. Results are sorted by (distance, index):
/// equal distances resolve to the smaller index, exactly as a brute-force scan
/// would.
class KdTree {
public:
    struct Neighbor {
        std::size_t index;
        double squared_distance;
    };

    explicit KdTree(Eigen::MatrixXd points, std::size_t leaf_size = 16)
        : points_(std::move(points)), leaf_size_(std::max<std::size_t>(leaf_size, 1)) {
        index_.resize(static_cast<std::size_t>(points_.rows()));
        std::iota(index_.begin(), index_.end(), std::size_t{0});
        if (!index_.empty()) {
            nodes_.reserve(2 * index_.size() / leaf_size_ + 2);
            build(0, index_.size());
        }
    }

    std::size_t size() const noexcept { return index_.size(); }
    std::size_t dim() const noexcept { return static_cast<std::size_t>(points_.cols()); }
    const Eigen::MatrixXd& points() const noexcept { return points_; }

    /// The k nearest stored points to `query`, nearest first.
    template <typename Derived>
    std::vector<Neighbor> knn(const Eigen::MatrixBase<Derived>& query, std::size_t k) const {
        if (index_.empty()) {
            throw ConfigError("knn_query: empty location set");
        }
        if (static_cast<std::size_t>(query.size()) != dim()) {
            throw ConfigError("knn_query: query dimension does not match the tree");
        }
        k = std::min(k, size());
        std::vector<Neighbor> heap;
        heap.reserve(k + 1);
        if (k == 0) {
            return heap;
        }
        const Eigen::VectorXd q = query.derived().template cast<double>();
        search(0, q, k, heap);
        std::sort_heap(heap.begin(), heap.end(), before);
        return heap;
    }

    template <typename Derived>
    std::vector<std::size_t> knn_indices(const Eigen::MatrixBase<Derived>& query, std::size_t k) const {
        const auto found = knn(query, k);
        std::vector<std::size_t> out(found.size());
        std::transform(found.begin(), found.end(), out.begin(), [](const Neighbor& nb) { return nb.index; });
        return out;
    }

private:
    struct Node {
        std::size_t begin = 0;
        std::size_t end = 0;
        int axis = -1;  // -1 marks a leaf
        double split = 0.0;
        std::size_t left = 0;
        std::size_t right = 0;
    };

    static bool before(const Neighbor& a, const Neighbor& b) noexcept {
        return a.squared_distance < b.squared_distance ||
               (a.squared_distance == b.squared_distance && a.index < b.index);
    }

    double squared_distance(std::size_t i, const Eigen::VectorXd& q) const noexcept {
        return (points_.row(static_cast<Eigen::Index>(i)).transpose() - q).squaredNorm();
    }

    std::size_t build(std::size_t begin, std::size_t end) {
        const std::size_t id = nodes_.size();
        nodes_.push_back(Node{begin, end});
        if (end - begin <= leaf_size_) {
            return id;
        }
        int axis = 0;
        double widest = -1.0;
        for (Eigen::Index k = 0; k < points_.cols(); ++k) {
            double lo = points_(static_cast<Eigen::Index>(index_[begin]), k);
            double hi = lo;
            for (std::size_t j = begin + 1; j < end; ++j) {
                const double v = points_(static_cast<Eigen::Index>(index_[j]), k);
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
            if (hi - lo > widest) {
                widest = hi - lo;
                axis = static_cast<int>(k);
            }
        }
        if (widest <= 0.0) {
            return id;  // all points coincide
        }
        const std::size_t mid = begin + (end - begin) / 2;
        auto coord = [&](std::size_t i) { return points_(static_cast<Eigen::Index>(i), axis); };
        std::nth_element(index_.begin() + static_cast<std::ptrdiff_t>(begin),
                         index_.begin() + static_cast<std::ptrdiff_t>(mid),
                         index_.begin() + static_cast<std::ptrdiff_t>(end),
                         [&](std::size_t a, std::size_t b) { return coord(a) < coord(b); });
        // Left child: coordinate <= split, right child: coordinate >= split.
        const double split = coord(index_[mid]);
        const std::size_t left = build(begin, mid);
        const std::size_t right = build(mid, end);
        nodes_[id].axis = axis;
        nodes_[id].split = split;
        nodes_[id].left = left;
        nodes_[id].right = right;
        return id;
    }

    void offer(std::size_t i, double d2, std::size_t k, std::vector<Neighbor>& heap) const {
        const Neighbor cand{i, d2};
        if (heap.size() < k) {
            heap.push_back(cand);
            std::push_heap(heap.begin(), heap.end(), before);
        } else if (before(cand, heap.front())) {
            std::pop_heap(heap.begin(), heap.end(), before);
            heap.back() = cand;
            std::push_heap(heap.begin(), heap.end(), before);
        }
    }

    void search(std::size_t id, const Eigen::VectorXd& q, std::size_t k, std::vector<Neighbor>& heap) const {
        const Node& node = nodes_[id];
        if (node.axis < 0) {
            for (std::size_t j = node.begin; j < node.end; ++j) {
                offer(index_[j], squared_distance(index_[j], q), k, heap);
            }
            return;
        }
        const double diff = q(node.axis) - node.split;
        const std::size_t near = diff <= 0.0 ? node.left : node.right;
        const std::size_t far = diff <= 0.0 ? node.right : node.left;
        search(near, q, k, heap);
        // Points on the far side are at least |diff| away along the split axis.
        // Ties must still be visited so that smaller indices can win.
        if (heap.size() < k || diff * diff <= heap.front().squared_distance) {
            search(far, q, k, heap);
        }
    }

    Eigen::MatrixXd points_;
    std::size_t leaf_size_;
    std::vector<std::size_t> index_;
    std::vector<Node> nodes_;
};

}  // namespace snn
