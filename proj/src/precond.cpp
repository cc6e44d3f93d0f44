#include "mss/precond.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <random>

#include "mss/parallel.hpp"

namespace mss {

namespace {

// Orthogonalizes x against the first `count` columns of basis, twice (classical Gram-Schmidt
// with reorthogonalization). Returns the accumulated coefficients.
Vector orthogonalize(const Matrix& basis, Index count, Vector& x) {
  Vector coeffs = Vector::Zero(count);
  if (count == 0) return coeffs;
  for (int pass = 0; pass < 2; ++pass) {
    const Vector c = basis.leftCols(count).transpose() * x;
    x -= basis.leftCols(count) * c;
    coeffs += c;
  }
  return coeffs;
}

// A unit vector orthogonal to the first `count` columns of basis.
Vector random_orthogonal(const Matrix& basis, Index count, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  for (int attempt = 0; attempt < 3; ++attempt) {
    Vector x(basis.rows());
    for (Index i = 0; i < x.size(); ++i) x[i] = normal(rng);
    orthogonalize(basis, count, x);
    const double n = x.norm();
    if (n > 1e-8 * std::sqrt(static_cast<double>(x.size()))) return x / n;
  }
  throw BreakdownError("partial_svd: could not extend the Krylov basis after 3 restarts", 0);
}

}  // namespace

SegmentSvd partial_svd(const LinearMap<Vector>& op, const LinearMap<Vector>& op_t, Index dimension, Index rank,
                       int cycles, std::uint64_t seed, double clamp) {
  require(rank >= 1, "partial_svd: rank must be at least 1");
  if (rank > dimension) {
    throw ContractViolation("partial_svd: rank " + std::to_string(rank) + " exceeds dimension " +
                            std::to_string(dimension));
  }
  require(cycles >= 1, "partial_svd: need at least one cycle");

  const Index n = dimension;
  const Index block = rank + 2;
  const Index capacity = std::min(n, 2 * rank + 2);
  Matrix p_basis = Matrix::Zero(n, capacity);
  Matrix q_basis = Matrix::Zero(n, capacity);
  Matrix bmat = Matrix::Zero(capacity, capacity);
  Vector residual = Vector::Zero(n);
  Index m = 0;
  std::mt19937_64 rng(seed);

  Vector p = random_orthogonal(p_basis, 0, rng);
  double scale = 0.0;

  for (int cycle = 1; cycle <= cycles; ++cycle) {
    if (cycle > 1) {
      Eigen::JacobiSVD<Matrix> svd(bmat.topLeftCorner(m, m), Eigen::ComputeFullU | Eigen::ComputeFullV);
      const Index keep = std::clamp<Index>(std::min(rank, n - block), 0, m);
      if (keep > 0) {
        const Matrix new_p = p_basis.leftCols(m) * svd.matrixV().leftCols(keep);
        const Matrix new_q = q_basis.leftCols(m) * svd.matrixU().leftCols(keep);
        p_basis.leftCols(keep) = new_p;
        q_basis.leftCols(keep) = new_q;
        bmat.setZero();
        bmat.topLeftCorner(keep, keep) = svd.singularValues().head(keep).asDiagonal();
        m = keep;
        const double rn = residual.norm();
        if (rn > 1e-14 * std::max(scale, 1e-300)) {
          p = residual / rn;
          orthogonalize(p_basis, m, p);
          p.normalize();
        } else {
          p = random_orthogonal(p_basis, m, rng);
        }
      } else {
        p = p_basis.leftCols(m) * svd.matrixV().col(0);
        p.normalize();
        bmat.setZero();
        m = 0;
      }
    }

    const Index steps = std::min(block, n - m);
    for (Index j = 0; j < steps; ++j) {
      if (j > 0) {
        const double rn = residual.norm();
        if (rn > 1e-14 * std::max(scale, 1e-300)) {
          p = residual / rn;
          orthogonalize(p_basis, m, p);
          const double pn = p.norm();
          p = pn > 0.5 ? Vector(p / pn) : random_orthogonal(p_basis, m, rng);
        } else {
          p = random_orthogonal(p_basis, m, rng);
        }
      }
      p_basis.col(m) = p;

      Vector y = op(p);
      bmat.col(m).head(m) = orthogonalize(q_basis, m, y);
      const double alpha = y.norm();
      scale = std::max(scale, alpha);
      if (alpha > 1e-14 * std::max(scale, 1e-300)) {
        q_basis.col(m) = y / alpha;
      } else {
        q_basis.col(m) = random_orthogonal(q_basis, m, rng);
      }
      bmat(m, m) = alpha;

      residual = op_t(q_basis.col(m));
      orthogonalize(p_basis, m + 1, residual);
      ++m;
    }
  }

  Eigen::JacobiSVD<Matrix> svd(bmat.topLeftCorner(m, m), Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vector& sv = svd.singularValues();
  Index r = std::min(rank, m);
  const double cutoff = clamp * (sv.size() > 0 ? sv[0] : 0.0);
  while (r > 0 && !(sv[r - 1] > cutoff && sv[r - 1] > 0.0)) --r;

  SegmentSvd out;
  out.left = q_basis.leftCols(m) * svd.matrixU().leftCols(r);
  out.right = p_basis.leftCols(m) * svd.matrixV().leftCols(r);
  out.singular_values = sv.head(r);
  out.cycles = cycles;
  return out;
}

SegmentSvd partial_svd_segment(const Trajectory& traj, CostLedger& ledger, Index segment, Index rank, int cycles,
                               std::uint64_t seed) {
  require(segment >= 0 && segment < traj.segments(), "partial_svd_segment: segment out of range");
  const LinearMap<Vector> op = [&](const Vector& z) { return phi_apply(traj, ledger, segment, z); };
  const LinearMap<Vector> op_t = [&](const Vector& z) { return phi_transpose_apply(traj, ledger, segment, z); };
  SegmentSvd out = partial_svd(op, op_t, traj.dimension(), rank, cycles, seed);
  out.segment = segment;
  return out;
}

BlockDiagPreconditioner::BlockDiagPreconditioner(std::vector<SegmentSvd> blocks, Index rank, int cycles)
    : blocks_(std::move(blocks)), rank_(rank), cycles_(cycles) {
  require(!blocks_.empty(), "BlockDiagPreconditioner: no blocks");
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const SegmentSvd& b = blocks_[i];
    require(b.left.rows() == dimension() && b.left.cols() == b.rank(), "BlockDiagPreconditioner: inconsistent block");
    require(b.rank() == 0 || b.singular_values.minCoeff() > 0.0,
            "BlockDiagPreconditioner: singular values must be positive");
  }
}

SegmentStack BlockDiagPreconditioner::apply_power(const SegmentStack& z, double exponent) const {
  if (z.blocks() != segments() || z.dimension() != dimension()) {
    throw ContractViolation("BlockDiagPreconditioner: stack shape does not match the preconditioner");
  }
  SegmentStack y = z;
  for (Index i = 0; i < segments(); ++i) {
    const SegmentSvd& b = blocks_[static_cast<std::size_t>(i)];
    if (b.rank() == 0) continue;
    const Vector coeffs = b.left.transpose() * z.block(i);
    const Vector factor = b.singular_values.array().pow(exponent) - 1.0;
    y.block(i) += b.left * factor.cwiseProduct(coeffs);
  }
  return y;
}

Preconditioner<SegmentStack> BlockDiagPreconditioner::as_preconditioner() const {
  return {[this](const SegmentStack& z) { return apply(z); }, [this](const SegmentStack& z) { return apply_inverse(z); }};
}

Matrix BlockDiagPreconditioner::dense(double exponent) const {
  const Index n = dimension();
  Matrix m = Matrix::Identity(n * segments(), n * segments());
  for (Index i = 0; i < segments(); ++i) {
    const SegmentSvd& b = blocks_[static_cast<std::size_t>(i)];
    if (b.rank() == 0) continue;
    const Vector factor = b.singular_values.array().pow(exponent) - 1.0;
    m.block(i * n, i * n, n, n) += b.left * factor.asDiagonal() * b.left.transpose();
  }
  return m;
}

BlockDiagPreconditioner build_block_diag_preconditioner(const Trajectory& traj, CostLedger& ledger, Index rank,
                                                        int cycles, std::uint64_t seed, int workers) {
  std::vector<SegmentSvd> blocks(static_cast<std::size_t>(traj.segments()));
  parallel_for(traj.segments(), workers, [&](Index i) {
    blocks[static_cast<std::size_t>(i)] =
        partial_svd_segment(traj, ledger, i, rank, cycles, seed + static_cast<std::uint64_t>(i));
  });
  return BlockDiagPreconditioner(std::move(blocks), rank, cycles);
}

SegmentStack bdp_apply(const BlockDiagPreconditioner& pc, const SegmentStack& z) { return pc.apply(z); }

Matrix exact_preconditioner_build(const Matrix& a, Index rank) {
  const Index rows = a.rows();
  if (rank < 0 || rank > rows) {
    throw ContractViolation("exact_preconditioner_build: rank " + std::to_string(rank) + " outside [0, " +
                            std::to_string(rows) + "]");
  }
  Matrix m = Matrix::Identity(rows, rows);
  if (rank == 0) return m;
  Eigen::BDCSVD<Matrix> svd(a, Eigen::ComputeThinU);
  const Matrix u1 = svd.matrixU().leftCols(rank);
  const Vector factor = svd.singularValues().head(rank).array().pow(-2.0) - 1.0;
  m += u1 * factor.asDiagonal() * u1.transpose();
  return m;
}

CostPrediction predict_costs(Index segments, int cycles, Index rank, int iterations) {
  require(segments >= 0 && cycles >= 0 && rank >= 0 && iterations >= 0, "predict_costs: arguments must be non-negative");
  CostPrediction c;
  c.preconditioner = cycles == 0 ? 0 : 2 * segments * cycles * (rank + 2);
  c.solve = 2 * segments * iterations;
  return c;
}

namespace {

static_assert(std::endian::native == std::endian::little, "binary dumps assume a little-endian host");

void put_u64(std::ostream& os, std::uint64_t v) { os.write(reinterpret_cast<const char*>(&v), sizeof v); }

std::uint64_t get_u64(std::istream& is, const std::string& path) {
  std::uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) throw Error("truncated binary file: " + path);
  return v;
}

void read_doubles(std::istream& is, double* data, Index count, const std::string& path) {
  is.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(sizeof(double) * count));
  if (!is) throw Error("truncated binary file: " + path);
}

}  // namespace

void save_preconditioner(const BlockDiagPreconditioner& pc, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open for writing: " + path);
  put_u64(os, static_cast<std::uint64_t>(pc.dimension()));
  put_u64(os, static_cast<std::uint64_t>(pc.segments()));
  put_u64(os, static_cast<std::uint64_t>(pc.rank()));
  put_u64(os, static_cast<std::uint64_t>(pc.cycles()));
  for (const SegmentSvd& b : pc.blocks()) {
    put_u64(os, static_cast<std::uint64_t>(b.rank()));
    os.write(reinterpret_cast<const char*>(b.singular_values.data()),
             static_cast<std::streamsize>(sizeof(double) * b.singular_values.size()));
    os.write(reinterpret_cast<const char*>(b.left.data()), static_cast<std::streamsize>(sizeof(double) * b.left.size()));
  }
  if (!os) throw Error("write failed: " + path);
}

BlockDiagPreconditioner load_preconditioner(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open for reading: " + path);
  const auto n = static_cast<Index>(get_u64(is, path));
  const auto k = static_cast<Index>(get_u64(is, path));
  const auto l = static_cast<Index>(get_u64(is, path));
  const auto q = static_cast<int>(get_u64(is, path));
  std::vector<SegmentSvd> blocks(static_cast<std::size_t>(k));
  for (Index i = 0; i < k; ++i) {
    SegmentSvd& b = blocks[static_cast<std::size_t>(i)];
    const auto r = static_cast<Index>(get_u64(is, path));
    if (r > n) throw Error("corrupt preconditioner file: " + path);
    b.segment = i;
    b.cycles = q;
    b.singular_values.resize(r);
    read_doubles(is, b.singular_values.data(), r, path);
    b.left.resize(n, r);
    read_doubles(is, b.left.data(), n * r, path);
  }
  return BlockDiagPreconditioner(std::move(blocks), l, q);
}

}  // namespace mss
