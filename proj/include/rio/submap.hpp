#pragma once

// World-frame point map: an incremental k-d tree with lazy deletion and
// scapegoat-style rebuilds, plus the uncertainty-gated insertion rule.
// Query results are contractually identical to brute force over the alive
// point set, with ties broken by insertion stamp.

#include <algorithm>
#include <cmath>
#include <queue>
#include <vector>

#include "rio/map_point.hpp"

namespace rio {

class SpatialIndex {
 public:
  struct Params {
    double rebuild_deleted_fraction = 0.5;
    double imbalance_bound = 0.7;
  };

  SpatialIndex() = default;
  explicit SpatialIndex(std::vector<MapPoint> points)
      : SpatialIndex(std::move(points), Params()) {}
  SpatialIndex(std::vector<MapPoint> points, Params params) : params_(params) {
    for (auto& p : points) {
      p.stamp = next_stamp_++;
      nodes_.push_back(Node{p, -1, -1, -1, 0, 1, 1, false});
    }
    std::vector<int> ids(nodes_.size());
    for (size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i);
    root_ = build(ids, 0, static_cast<int>(ids.size()), 0, -1);
    alive_ = static_cast<long>(nodes_.size());
  }

  long size() const { return alive_; }
  long next_stamp() const { return next_stamp_; }

  void insert(MapPoint p) {
    p.stamp = next_stamp_++;
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back(Node{p, -1, -1, -1, 0, 1, 1, false});
    ++alive_;
    if (root_ < 0) {
      root_ = id;
      nodes_[id].axis = 0;
      return;
    }
    int cur = root_;
    int depth = 0;
    while (true) {
      Node& n = nodes_[cur];
      ++n.subtree_size;
      ++n.alive_size;
      const int axis = n.axis;
      int& child = p.position[axis] < n.point.position[axis] ? n.left : n.right;
      if (child < 0) {
        child = id;
        nodes_[id].parent = cur;
        nodes_[id].axis = (axis + 1) % 3;
        ++depth;
        break;
      }
      cur = child;
      ++depth;
    }
    maybe_rebuild(depth);
  }

  struct KnnResult {
    std::vector<MapPoint> points;  // ascending by (distance, stamp)
    bool short_count = false;
  };

  KnnResult knn(const Vec3& query, int k) const {
    KnnResult res;
    if (k <= 0) return res;
    std::priority_queue<Cand> heap;  // max-heap: worst candidate on top
    knn_rec(root_, query, k, heap);
    res.short_count = static_cast<int>(heap.size()) < k;
    res.points.resize(heap.size());
    for (int i = static_cast<int>(heap.size()) - 1; i >= 0; --i) {
      res.points[i] = nodes_[heap.top().id].point;
      heap.pop();
    }
    return res;
  }

  std::vector<int> radius_ids(const Vec3& query, double radius) const {
    std::vector<int> out;
    radius_rec(root_, query, radius * radius, out);
    std::sort(out.begin(), out.end(), [&](int a, int b) {
      return nodes_[a].point.stamp < nodes_[b].point.stamp;
    });
    return out;
  }

  const MapPoint& point(int id) const { return nodes_[id].point; }

  // Lazy deletion only: node ids stay valid until the next insert, so a
  // radius query's ids can be removed one by one.
  void remove_id(int id) {
    if (nodes_[id].deleted) return;
    nodes_[id].deleted = true;
    --alive_;
    for (int cur = id; cur >= 0; cur = nodes_[cur].parent) {
      --nodes_[cur].alive_size;
    }
  }

  // Sliding spatial window: drop everything outside the radius.
  void prune_outside(const Vec3& center, double radius) {
    const double r2 = radius * radius;
    for (size_t i = 0; i < nodes_.size(); ++i) {
      if (!nodes_[i].deleted &&
          (nodes_[i].point.position - center).squaredNorm() > r2) {
        remove_id(static_cast<int>(i));
      }
    }
    const long total = static_cast<long>(nodes_.size());
    if (total > 8 && total - alive_ > params_.rebuild_deleted_fraction * total) {
      rebuild_all();
    }
  }

  // Alive points in insertion order.
  std::vector<MapPoint> export_points() const {
    std::vector<MapPoint> out;
    out.reserve(alive_);
    for (const auto& n : nodes_) {
      if (!n.deleted) out.push_back(n.point);
    }
    std::sort(out.begin(), out.end(),
              [](const MapPoint& a, const MapPoint& b) { return a.stamp < b.stamp; });
    return out;
  }

  // Immutable compacted copy for residual assembly; later insertions into
  // the live index leave the snapshot untouched. Stamps are preserved.
  SpatialIndex snapshot() const {
    SpatialIndex snap;
    snap.params_ = params_;
    const std::vector<MapPoint> pts = export_points();
    snap.nodes_.reserve(pts.size());
    for (const auto& p : pts) {
      snap.nodes_.push_back(Node{p, -1, -1, -1, 0, 1, 1, false});
    }
    std::vector<int> ids(snap.nodes_.size());
    for (size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i);
    snap.root_ = snap.build(ids, 0, static_cast<int>(ids.size()), 0, -1);
    snap.alive_ = static_cast<long>(snap.nodes_.size());
    snap.next_stamp_ = next_stamp_;
    return snap;
  }

 private:
  struct Node {
    MapPoint point;
    int left = -1;
    int right = -1;
    int parent = -1;
    int axis = 0;
    int subtree_size = 1;
    int alive_size = 1;
    bool deleted = false;
  };

  struct Cand {
    double d2;
    long stamp;
    int id;
    bool operator<(const Cand& o) const {
      return d2 != o.d2 ? d2 < o.d2 : stamp < o.stamp;
    }
  };

  int build(std::vector<int>& ids, int lo, int hi, int axis, int parent) {
    if (lo >= hi) return -1;
    const int mid = (lo + hi) / 2;
    std::nth_element(ids.begin() + lo, ids.begin() + mid, ids.begin() + hi,
                     [&](int a, int b) {
                       const double pa = nodes_[a].point.position[axis];
                       const double pb = nodes_[b].point.position[axis];
                       return pa != pb ? pa < pb
                                       : nodes_[a].point.stamp < nodes_[b].point.stamp;
                     });
    const int id = ids[mid];
    Node& n = nodes_[id];
    n.axis = axis;
    n.parent = parent;
    n.left = build(ids, lo, mid, (axis + 1) % 3, id);
    n.right = build(ids, mid + 1, hi, (axis + 1) % 3, id);
    n.subtree_size = 1;
    n.alive_size = n.deleted ? 0 : 1;
    if (n.left >= 0) {
      n.subtree_size += nodes_[n.left].subtree_size;
      n.alive_size += nodes_[n.left].alive_size;
    }
    if (n.right >= 0) {
      n.subtree_size += nodes_[n.right].subtree_size;
      n.alive_size += nodes_[n.right].alive_size;
    }
    return id;
  }

  void rebuild_all() {
    std::vector<Node> alive_nodes;
    alive_nodes.reserve(alive_);
    for (const auto& n : nodes_) {
      if (!n.deleted) alive_nodes.push_back(Node{n.point, -1, -1, -1, 0, 1, 1, false});
    }
    nodes_ = std::move(alive_nodes);
    std::vector<int> ids(nodes_.size());
    for (size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i);
    root_ = build(ids, 0, static_cast<int>(ids.size()), 0, -1);
  }

  void maybe_rebuild(int depth) {
    const long total = static_cast<long>(nodes_.size());
    if (total > 8 &&
        total - alive_ > params_.rebuild_deleted_fraction * total) {
      rebuild_all();
      return;
    }
    if (depth > 4 && alive_ > 8) {
      const double limit =
          std::log(static_cast<double>(alive_)) / std::log(1.0 / params_.imbalance_bound);
      if (depth > limit + 2) rebuild_all();
    }
  }

  void knn_rec(int id, const Vec3& q, int k, std::priority_queue<Cand>& heap) const {
    if (id < 0) return;
    const Node& n = nodes_[id];
    if (!n.deleted) {
      const double d2 = (n.point.position - q).squaredNorm();
      const Cand cand{d2, n.point.stamp, id};
      if (static_cast<int>(heap.size()) < k) {
        heap.push(cand);
      } else if (cand < heap.top()) {
        heap.pop();
        heap.push(cand);
      }
    }
    const double diff = q[n.axis] - n.point.position[n.axis];
    const int near = diff < 0.0 ? n.left : n.right;
    const int far = diff < 0.0 ? n.right : n.left;
    knn_rec(near, q, k, heap);
    if (static_cast<int>(heap.size()) < k || diff * diff <= heap.top().d2) {
      knn_rec(far, q, k, heap);
    }
  }

  void radius_rec(int id, const Vec3& q, double r2, std::vector<int>& out) const {
    if (id < 0) return;
    const Node& n = nodes_[id];
    if (!n.deleted && (n.point.position - q).squaredNorm() <= r2) {
      out.push_back(id);
    }
    const double diff = q[n.axis] - n.point.position[n.axis];
    const int near = diff < 0.0 ? n.left : n.right;
    const int far = diff < 0.0 ? n.right : n.left;
    radius_rec(near, q, r2, out);
    if (diff * diff <= r2) radius_rec(far, q, r2, out);
  }

  Params params_;
  std::vector<Node> nodes_;
  int root_ = -1;
  long alive_ = 0;
  long next_stamp_ = 0;
};

struct InsertReport {
  int inserted = 0;
  int replaced = 0;  // existing points pruned for a better candidate
  int rejected = 0;  // candidate trace above tau_u
  int dropped = 0;   // a strictly better existing point was already there
};

// Uncertainty-gated insertion: candidates above tau_u never enter; existing
// neighbors with strictly higher trace are pruned; the candidate itself is
// dropped when a strictly lower-trace neighbor already covers the spot.
inline InsertReport insert_with_replacement(SpatialIndex& index,
                                            const std::vector<MapPoint>& candidates,
                                            double r_replace, double tau_u) {
  InsertReport report;
  for (const auto& c : candidates) {
    const double trace = c.covariance.trace();
    if (trace > tau_u) {
      ++report.rejected;
      continue;
    }
    bool better_exists = false;
    for (int id : index.radius_ids(c.position, r_replace)) {
      const double other = index.point(id).trace;
      if (other > trace) {
        index.remove_id(id);
        ++report.replaced;
      } else if (other < trace) {
        better_exists = true;
      }
    }
    if (better_exists) {
      ++report.dropped;
    } else {
      index.insert(c);
      ++report.inserted;
    }
  }
  return report;
}

}  // namespace rio
