#include "nirpcc/spatial.hpp"

#include <algorithm>
#include <limits>

namespace nirpcc {

Partition build_partition(const VoxelCloud& vox, int cube_bits) {
  if (cube_bits < 0 || cube_bits > vox.resolution_bits)
    throw DataError("build_partition: cube_bits must be in 0..resolution_bits");
  Partition p;
  p.resolution_bits = vox.resolution_bits;
  p.cube_bits = cube_bits;

  std::vector<uint64_t> codes;
  codes.reserve(vox.voxels.size());
  for (const Voxel& v : vox.voxels)
    codes.push_back(morton_encode(cube_of(v, p.resolution_bits, cube_bits)));
  std::sort(codes.begin(), codes.end());
  codes.erase(std::unique(codes.begin(), codes.end()), codes.end());

  p.cubes.reserve(codes.size());
  for (uint64_t c : codes) p.cubes.push_back(morton_decode(c));
  return p;
}

// ---------------------------------------------------------------------------
// NeighborIndex

namespace {
constexpr uint32_t kLeafSize = 12;

int64_t squared_distance(const Voxel& a, const Voxel& b) {
  int64_t dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}
}  // namespace

NeighborIndex::NeighborIndex(const std::vector<Voxel>& points)
    : points_(points) {
  if (points_.empty())
    throw DataError("NeighborIndex: cannot index an empty point set");
  index_.resize(points_.size());
  for (uint32_t i = 0; i < points_.size(); ++i) index_[i] = i;
  nodes_.reserve(points_.size() / kLeafSize * 2 + 2);
  build(0, static_cast<uint32_t>(points_.size()));
  morton_.resize(points_.size());
  for (size_t i = 0; i < points_.size(); ++i) morton_[i] = morton_encode(points_[i]);
}

uint32_t NeighborIndex::build(uint32_t begin, uint32_t end) {
  const uint32_t id = static_cast<uint32_t>(nodes_.size());
  nodes_.push_back({});
  if (end - begin <= kLeafSize) {
    nodes_[id].begin = begin;
    nodes_[id].end = end;
    return id;
  }
  // Split on the widest axis to keep cells roughly cubical.
  Voxel lo = points_[begin], hi = points_[begin];
  for (uint32_t i = begin + 1; i < end; ++i)
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], points_[i][a]);
      hi[a] = std::max(hi[a], points_[i][a]);
    }
  int axis = 0;
  for (int a = 1; a < 3; ++a)
    if (hi[a] - lo[a] > hi[axis] - lo[axis]) axis = a;

  const uint32_t mid = begin + (end - begin) / 2;
  auto cmp = [&](uint32_t ia, uint32_t ib) {
    return points_[ia][axis] < points_[ib][axis];
  };
  // Reorder indices and points together via a scratch permutation.
  std::vector<uint32_t> order(end - begin);
  for (uint32_t i = 0; i < order.size(); ++i) order[i] = begin + i;
  std::nth_element(order.begin(), order.begin() + (mid - begin), order.end(), cmp);
  std::vector<Voxel> tmp_pts(order.size());
  std::vector<uint32_t> tmp_idx(order.size());
  for (uint32_t i = 0; i < order.size(); ++i) {
    tmp_pts[i] = points_[order[i]];
    tmp_idx[i] = index_[order[i]];
  }
  std::copy(tmp_pts.begin(), tmp_pts.end(), points_.begin() + begin);
  std::copy(tmp_idx.begin(), tmp_idx.end(), index_.begin() + begin);

  nodes_[id].axis = axis;
  nodes_[id].split = points_[mid][axis];
  const uint32_t left = build(begin, mid);
  const uint32_t right = build(mid, end);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

void NeighborIndex::search(uint32_t node_id, const Voxel& query, Hit& best,
                           uint64_t& best_morton) const {
  const Node& node = nodes_[node_id];
  if (node.axis < 0) {
    for (uint32_t i = node.begin; i < node.end; ++i) {
      int64_t d2 = squared_distance(points_[i], query);
      if (d2 < best.dist2 || (d2 == best.dist2 && morton_[i] < best_morton)) {
        best = {points_[i], d2, index_[i]};
        best_morton = morton_[i];
      }
    }
    return;
  }
  const int64_t diff = query[node.axis] - node.split;
  const uint32_t near = diff < 0 ? node.left : node.right;
  const uint32_t far = diff < 0 ? node.right : node.left;
  search(near, query, best, best_morton);
  // The far half-space may still hold an equally-distant point with a
  // smaller Morton code, so the bound check is <=, not <.
  if (diff * diff <= best.dist2) search(far, query, best, best_morton);
}

NeighborIndex::Hit NeighborIndex::nearest(const Voxel& query) const {
  Hit best;
  best.dist2 = std::numeric_limits<int64_t>::max();
  uint64_t best_morton = ~0ull;
  search(0, query, best, best_morton);
  return best;
}

}  // namespace nirpcc
