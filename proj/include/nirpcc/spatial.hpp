#pragma once

#include <cstddef>
#include <vector>

#include "nirpcc/pointset.hpp"

namespace nirpcc {

/// Cube containing voxel x: component-wise floor division by 2^(N-T).
inline Voxel cube_of(const Voxel& x, int resolution_bits, int cube_bits) {
  const int shift = resolution_bits - cube_bits;
  return {x[0] >> shift, x[1] >> shift, x[2] >> shift};
}

/// Division of the N-bit space into 2^T cubes per axis; only cubes that
/// contain at least one voxel are kept.
struct Partition {
  int resolution_bits = 0;  // N
  int cube_bits = 0;        // T
  std::vector<Voxel> cubes;  // non-empty cubes, ascending Morton order

  int local_bits() const { return resolution_bits - cube_bits; }
  uint64_t voxels_per_cube() const { return 1ull << (3 * local_bits()); }
  uint64_t candidate_count() const { return cubes.size() * voxels_per_cube(); }
};

Partition build_partition(const VoxelCloud& vox, int cube_bits);

/// Streams every voxel of every non-empty cube exactly once: cubes in Morton
/// order, voxels in Morton order within each cube. Candidate sets can exceed
/// 10^8 voxels, so nothing is materialized.
class CandidateRange {
 public:
  explicit CandidateRange(const Partition& partition) : partition_(&partition) {}

  class iterator {
   public:
    iterator(const Partition* p, size_t cube_index)
        : partition_(p), cube_index_(cube_index) {}

    Voxel operator*() const {
      const Voxel& cube = partition_->cubes[cube_index_];
      const int shift = partition_->local_bits();
      Voxel local = morton_decode(local_code_);
      return {(cube[0] << shift) | local[0], (cube[1] << shift) | local[1],
              (cube[2] << shift) | local[2]};
    }
    iterator& operator++() {
      if (++local_code_ == partition_->voxels_per_cube()) {
        local_code_ = 0;
        ++cube_index_;
      }
      return *this;
    }
    bool operator==(const iterator& o) const {
      return cube_index_ == o.cube_index_ && local_code_ == o.local_code_;
    }

   private:
    const Partition* partition_;
    size_t cube_index_;
    uint64_t local_code_ = 0;
  };

  iterator begin() const { return iterator(partition_, 0); }
  iterator end() const { return iterator(partition_, partition_->cubes.size()); }
  uint64_t size() const { return partition_->candidate_count(); }

 private:
  const Partition* partition_;
};

/// Exact nearest-neighbor index over a voxel set (kd-tree, integer metric).
/// Distance ties resolve to the point with the smallest Morton code, so
/// every query has one deterministic answer.
class NeighborIndex {
 public:
  explicit NeighborIndex(const std::vector<Voxel>& points);

  struct Hit {
    Voxel point;
    int64_t dist2;   // exact squared Euclidean distance
    uint32_t index;  // position in the indexed vector
  };
  Hit nearest(const Voxel& query) const;

  size_t size() const { return points_.size(); }

 private:
  struct Node {
    int32_t axis = -1;    // -1 marks a leaf
    int32_t split = 0;    // coordinate of the median point on `axis`
    uint32_t left = 0, right = 0;
    uint32_t begin = 0, end = 0;  // leaf range in points_
  };

  uint32_t build(uint32_t begin, uint32_t end);
  void search(uint32_t node, const Voxel& query, Hit& best,
              uint64_t& best_morton) const;

  std::vector<Voxel> points_;    // reordered copies
  std::vector<uint32_t> index_;  // original position of points_[i]
  std::vector<uint64_t> morton_;
  std::vector<Node> nodes_;
};

}  // namespace nirpcc
