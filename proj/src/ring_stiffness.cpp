#include "slewload/ring_stiffness.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <complex>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <Eigen/Eigenvalues>
#include <json.hpp>

#include "slewload/text.hpp"

namespace slewload {

namespace {

constexpr double kStructureTol = 1e-6;

int circular_distance(int k, int ball_count) { return std::min(k, ball_count - k); }

double block_scale(const std::vector<Eigen::Matrix4d>& blocks) {
  double scale = 0.0;
  for (const auto& block : blocks) scale = std::max(scale, block.norm());
  return scale;
}

}  // namespace

const char* ring_side_name(RingSide side) {
  return side == RingSide::Outer ? "outer" : "inner";
}

double RingStiffness::symmetry_defect(const std::vector<Eigen::Matrix4d>& blocks) {
  const int B = static_cast<int>(blocks.size());
  const double scale = block_scale(blocks);
  if (scale == 0.0) return 0.0;
  double defect = 0.0;
  for (int k = 0; k < B; ++k) {
    const Eigen::Matrix4d diff = blocks[k] - blocks[(B - k) % B].transpose();
    defect = std::max(defect, diff.norm());
  }
  return defect / scale;
}

RingStiffness RingStiffness::from_blocks(RingSide side, std::vector<Eigen::Matrix4d> blocks,
                                         int bandwidth) {
  const int B = static_cast<int>(blocks.size());
  if (B < 3) {
    throw std::invalid_argument("ring stiffness needs at least 3 generating blocks");
  }
  for (const auto& block : blocks) {
    if (!block.allFinite()) {
      throw std::invalid_argument("ring stiffness blocks contain non-finite entries");
    }
  }
  const double defect = symmetry_defect(blocks);
  if (defect > kStructureTol) {
    std::ostringstream msg;
    msg << "ring stiffness violates the circulant symmetry pairing (relative defect "
        << defect << ")";
    throw std::invalid_argument(msg.str());
  }
  // Enforce the pairing exactly so the quadratic form is symmetric to the bit.
  for (int k = 0; k <= B - k; ++k) {
    const int mirror = (B - k) % B;
    if (mirror < k) break;
    const Eigen::Matrix4d mean = 0.5 * (blocks[k] + blocks[mirror].transpose());
    blocks[k] = mean;
    blocks[mirror] = mean.transpose();
  }

  RingStiffness result;
  result.side_ = side;
  result.ball_count_ = B;
  result.circulant_ = true;
  result.blocks_ = std::move(blocks);
  result.bandwidth_ = bandwidth < 0 ? B / 2 : std::min(bandwidth, B / 2);
  for (int k = 0; k < B; ++k) {
    if (!result.block_active(k)) result.blocks_[k].setZero();
  }
  return result;
}

RingStiffness RingStiffness::from_dense(RingSide side, const Eigen::MatrixXd& full) {
  const int n = static_cast<int>(full.rows());
  if (n == 0 || full.cols() != n || n % 4 != 0) {
    throw std::invalid_argument("dense ring stiffness must be square with 4 rows per ball");
  }
  if (!full.allFinite()) {
    throw std::invalid_argument("dense ring stiffness contains non-finite entries");
  }
  const int B = n / 4;
  const double scale = full.cwiseAbs().maxCoeff();
  if ((full - full.transpose()).cwiseAbs().maxCoeff() > kStructureTol * std::max(scale, 1.0)) {
    throw std::invalid_argument("imported ring stiffness is not symmetric");
  }

  // Probe block-circulant structure against the first block row.
  std::vector<Eigen::Matrix4d> blocks(B);
  for (int k = 0; k < B; ++k) blocks[k] = full.block(0, 4 * k, 4, 4);
  bool circulant = B >= 3;
  for (int b1 = 1; circulant && b1 < B; ++b1) {
    for (int b2 = 0; b2 < B; ++b2) {
      const Eigen::Matrix4d diff =
          full.block(4 * b1, 4 * b2, 4, 4) - blocks[(b2 - b1 + B) % B];
      if (diff.cwiseAbs().maxCoeff() > kStructureTol * std::max(scale, 1.0)) {
        circulant = false;
        break;
      }
    }
  }
  if (circulant) {
    return from_blocks(side, std::move(blocks));
  }

  RingStiffness result;
  result.side_ = side;
  result.ball_count_ = B;
  result.circulant_ = false;
  result.dense_ = 0.5 * (full + full.transpose());
  result.bandwidth_ = B / 2;
  return result;
}

bool RingStiffness::block_active(int k) const {
  return circular_distance(k, ball_count_) <= bandwidth_;
}

const std::vector<Eigen::Matrix4d>& RingStiffness::blocks() const {
  if (!circulant_) {
    throw std::logic_error("generating blocks are unavailable for a dense ring stiffness");
  }
  return blocks_;
}

Eigen::MatrixXd RingStiffness::to_dense() const {
  if (!circulant_) return dense_;
  const int B = ball_count_;
  Eigen::MatrixXd full = Eigen::MatrixXd::Zero(4 * B, 4 * B);
  for (int b1 = 0; b1 < B; ++b1) {
    for (int b2 = 0; b2 < B; ++b2) {
      full.block(4 * b1, 4 * b2, 4, 4) = blocks_[(b2 - b1 + B) % B];
    }
  }
  return full;
}

double RingStiffness::energy(std::span<const double> d) const {
  if (d.size() != static_cast<std::size_t>(master_count())) {
    throw std::invalid_argument("displacement vector size does not match the ring");
  }
  const Eigen::Map<const Eigen::VectorXd> x(d.data(), d.size());
  if (!circulant_) {
    return 0.5 * x.dot(dense_ * x);
  }
  const int B = ball_count_;
  double energy = 0.0;
  for (int k = 0; k < B; ++k) {
    if (!block_active(k)) continue;
    const Eigen::Matrix4d& G = blocks_[k];
    for (int b = 0; b < B; ++b) {
      energy += x.segment<4>(4 * b).dot(G * x.segment<4>(4 * ((b + k) % B)));
    }
  }
  return 0.5 * energy;
}

void RingStiffness::multiply_add(std::span<const double> d, std::span<double> y) const {
  if (d.size() != static_cast<std::size_t>(master_count()) || y.size() != d.size()) {
    throw std::invalid_argument("vector sizes do not match the ring");
  }
  const Eigen::Map<const Eigen::VectorXd> x(d.data(), d.size());
  Eigen::Map<Eigen::VectorXd> out(y.data(), y.size());
  if (!circulant_) {
    out.noalias() += dense_ * x;
    return;
  }
  const int B = ball_count_;
  for (int k = 0; k < B; ++k) {
    if (!block_active(k)) continue;
    const Eigen::Matrix4d& G = blocks_[k];
    for (int b = 0; b < B; ++b) {
      out.segment<4>(4 * b).noalias() += G * x.segment<4>(4 * ((b + k) % B));
    }
  }
}

RingStiffness RingStiffness::truncated(int bandwidth) const {
  if (!circulant_) {
    throw std::logic_error("cannot truncate a dense ring stiffness");
  }
  return from_blocks(side_, blocks_, bandwidth);
}

int RingStiffness::suggest_bandwidth(double tol) const {
  if (!circulant_) return ball_count_ / 2;
  const int B = ball_count_;
  const double scale = blocks_[0].norm();
  // Smallest half-bandwidth w such that the norms of all blocks beyond
  // circular distance w sum to less than tol times the diagonal block norm.
  std::vector<double> tail(B / 2 + 1, 0.0);
  for (int k = 1; k < B; ++k) {
    tail[circular_distance(k, B)] += blocks_[k].norm();
  }
  double dropped = 0.0;
  int w = B / 2;
  while (w > 0 && dropped + tail[w] < tol * scale) {
    dropped += tail[w];
    --w;
  }
  return w;
}

RingStiffness::Spectrum RingStiffness::spectrum() const {
  Spectrum result{0.0, 0.0};
  if (!circulant_) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(dense_,
                                                          Eigen::EigenvaluesOnly);
    result.min_eigenvalue = solver.eigenvalues().minCoeff();
    result.max_eigenvalue = solver.eigenvalues().maxCoeff();
    return result;
  }
  // A block-circulant matrix splits into one 4x4 Hermitian eigenproblem per
  // azimuthal harmonic.
  const int B = ball_count_;
  bool first = true;
  for (int j = 0; j < B; ++j) {
    Eigen::Matrix4cd hat = Eigen::Matrix4cd::Zero();
    for (int k = 0; k < B; ++k) {
      if (!block_active(k)) continue;
      const double angle = 2.0 * M_PI * j * k / B;
      hat += blocks_[k].cast<std::complex<double>>() *
             std::complex<double>(std::cos(angle), std::sin(angle));
    }
    hat = 0.5 * (hat + hat.adjoint()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix4cd> solver(hat, Eigen::EigenvaluesOnly);
    const double lo = solver.eigenvalues().minCoeff();
    const double hi = solver.eigenvalues().maxCoeff();
    if (first) {
      result = {lo, hi};
      first = false;
    } else {
      result.min_eigenvalue = std::min(result.min_eigenvalue, lo);
      result.max_eigenvalue = std::max(result.max_eigenvalue, hi);
    }
  }
  return result;
}

namespace {

std::vector<std::string> dof_layout_for(RingSide side) {
  if (side == RingSide::Outer) return {"R1", "z1", "R4", "z4"};
  return {"R2", "z2", "R3", "z3"};
}

void write_row(std::ostream& out, const double* values, int count) {
  for (int i = 0; i < count; ++i) {
    if (i > 0) out << ',';
    out << format_double(values[i]);
  }
  out << '\n';
}

std::vector<double> parse_csv_numbers(const std::string& line, const char* context) {
  std::vector<double> values;
  std::istringstream stream(line);
  std::string field;
  while (std::getline(stream, field, ',')) {
    std::size_t consumed = 0;
    double value = 0.0;
    try {
      value = std::stod(field, &consumed);
    } catch (const std::exception&) {
      throw std::invalid_argument(std::string(context) + ": cannot parse '" + field + "'");
    }
    while (consumed < field.size() &&
           std::isspace(static_cast<unsigned char>(field[consumed]))) {
      ++consumed;
    }
    if (consumed != field.size()) {
      throw std::invalid_argument(std::string(context) + ": cannot parse '" + field + "'");
    }
    values.push_back(value);
  }
  return values;
}

}  // namespace

void RingStiffness::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot open '" + path + "' for writing");
  }
  nlohmann::json header;
  header["ring"] = ring_side_name(side_);
  header["balls"] = ball_count_;
  header["bandwidth"] = bandwidth_;
  header["dof_layout"] = dof_layout_for(side_);
  header["units"] = "N/mm";
  header["storage"] = circulant_ ? "circulant" : "dense";
  out << header.dump() << '\n';

  if (circulant_) {
    for (const auto& block : blocks_) {
      for (int row = 0; row < 4; ++row) {
        const Eigen::RowVector4d r = block.row(row);
        write_row(out, r.data(), 4);
      }
    }
  } else {
    std::vector<double> row(dense_.cols());
    for (Eigen::Index i = 0; i < dense_.rows(); ++i) {
      for (Eigen::Index jcol = 0; jcol < dense_.cols(); ++jcol) row[jcol] = dense_(i, jcol);
      write_row(out, row.data(), static_cast<int>(row.size()));
    }
  }
  if (!out) {
    throw std::runtime_error("failed while writing '" + path + "'");
  }
}

RingStiffness RingStiffness::load(const std::string& path, RingSide side_if_headerless) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open ring stiffness file '" + path + "'");
  }
  std::string line;
  if (!std::getline(in, line)) {
    throw std::invalid_argument("ring stiffness file '" + path + "' is empty");
  }

  auto read_matrix_rows = [&in, &path](int expected_cols) {
    std::vector<std::vector<double>> rows;
    std::string row_line;
    while (std::getline(in, row_line)) {
      if (row_line.find_first_not_of(" \t\r") == std::string::npos) continue;
      rows.push_back(parse_csv_numbers(row_line, path.c_str()));
      if (static_cast<int>(rows.back().size()) != expected_cols) {
        throw std::invalid_argument(path + ": expected " + std::to_string(expected_cols) +
                                    " values per row");
      }
    }
    return rows;
  };

  const auto first_char = line.find_first_not_of(" \t\r");
  if (first_char != std::string::npos && line[first_char] == '{') {
    nlohmann::json header;
    try {
      header = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw std::invalid_argument(path + ": bad header: " + e.what());
    }
    const std::string ring = header.at("ring").get<std::string>();
    RingSide side;
    if (ring == "outer") {
      side = RingSide::Outer;
    } else if (ring == "inner") {
      side = RingSide::Inner;
    } else {
      throw std::invalid_argument(path + ": ring must be 'outer' or 'inner'");
    }
    const int B = header.at("balls").get<int>();
    if (B < 3) {
      throw std::invalid_argument(path + ": ball count must be at least 3");
    }
    if (header.at("units").get<std::string>() != "N/mm") {
      throw std::invalid_argument(path + ": units must be N/mm");
    }
    if (header.contains("dof_layout") &&
        header["dof_layout"] != nlohmann::json(dof_layout_for(side))) {
      throw std::invalid_argument(path + ": dof_layout does not match the ring side");
    }
    const std::string storage = header.value("storage", "circulant");
    const int bandwidth = header.value("bandwidth", -1);

    const auto rows = read_matrix_rows(storage == "dense" ? 4 * B : 4);
    if (storage == "circulant") {
      if (static_cast<int>(rows.size()) != 4 * B) {
        throw std::invalid_argument(path + ": expected 4 rows per generating block");
      }
      std::vector<Eigen::Matrix4d> blocks(B);
      for (int k = 0; k < B; ++k) {
        for (int r = 0; r < 4; ++r) {
          for (int c = 0; c < 4; ++c) blocks[k](r, c) = rows[4 * k + r][c];
        }
      }
      return from_blocks(side, std::move(blocks), bandwidth);
    }
    if (storage != "dense") {
      throw std::invalid_argument(path + ": storage must be 'circulant' or 'dense'");
    }
    if (static_cast<int>(rows.size()) != 4 * B) {
      throw std::invalid_argument(path + ": expected one row per master displacement");
    }
    Eigen::MatrixXd full(4 * B, 4 * B);
    for (int r = 0; r < 4 * B; ++r) {
      for (int c = 0; c < 4 * B; ++c) full(r, c) = rows[r][c];
    }
    RingStiffness result = from_dense(side, full);
    if (result.is_circulant() && bandwidth >= 0) {
      result = result.truncated(bandwidth);
    }
    return result;
  }

  // Headerless file: a raw dense CSV, one row per master displacement.
  const auto first_row = parse_csv_numbers(line, path.c_str());
  const int n = static_cast<int>(first_row.size());
  if (n == 0 || n % 4 != 0) {
    throw std::invalid_argument(path + ": dense matrix needs a multiple of 4 columns");
  }
  auto rows = read_matrix_rows(n);
  rows.insert(rows.begin(), first_row);
  if (static_cast<int>(rows.size()) != n) {
    throw std::invalid_argument(path + ": dense matrix must be square");
  }
  Eigen::MatrixXd full(n, n);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) full(r, c) = rows[r][c];
  }
  return from_dense(side_if_headerless, full);
}

RingStiffness expand_from_sector(RingSide side,
                                 const std::vector<Eigen::Matrix4d>& sector_blocks,
                                 int ball_count, std::vector<std::string>* warnings) {
  if (sector_blocks.empty()) {
    throw std::invalid_argument("sector expansion needs at least the distance-0 block");
  }
  if (ball_count < 3) {
    throw std::invalid_argument("sector expansion needs at least 3 balls");
  }
  int width = static_cast<int>(sector_blocks.size()) - 1;
  const int max_width = ball_count / 2;
  if (width > max_width) {
    if (warnings != nullptr) {
      std::ostringstream msg;
      msg << "sector bandwidth " << width << " exceeds the largest circular distance "
          << max_width << " for " << ball_count << " balls; clamped";
      warnings->push_back(msg.str());
    }
    width = max_width;
  }

  std::vector<Eigen::Matrix4d> blocks(ball_count, Eigen::Matrix4d::Zero());
  blocks[0] = 0.5 * (sector_blocks[0] + sector_blocks[0].transpose());
  for (int k = 1; k <= width; ++k) {
    if (2 * k == ball_count) {
      blocks[k] = 0.5 * (sector_blocks[k] + sector_blocks[k].transpose());
    } else {
      blocks[k] = sector_blocks[k];
      blocks[ball_count - k] = sector_blocks[k].transpose();
    }
  }
  return RingStiffness::from_blocks(side, std::move(blocks), width);
}

}  // namespace slewload
