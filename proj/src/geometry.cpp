#include "slewload/geometry.hpp"

#include <cctype>
#include <fstream>
#include <istream>
#include <sstream>
#include <stdexcept>

#include "slewload/contact.hpp"

namespace slewload {

namespace {

void check_positive(double value, const char* name) {
  if (!(value > 0.0) || !std::isfinite(value)) {
    throw std::invalid_argument(std::string(name) + " must be positive and finite");
  }
}

}  // namespace

void BearingGeometry::validate() const {
  check_positive(mean_diameter, "mean_diameter");
  check_positive(ball_diameter_nominal, "ball_diameter");
  if (ball_count < 3) {
    throw std::invalid_argument("ball_count must be at least 3");
  }
  if (!(initial_contact_angle > 0.0) || !(initial_contact_angle < M_PI / 2.0)) {
    throw std::invalid_argument("initial_contact_angle must lie in (0, pi/2)");
  }
  if (!std::isfinite(first_ball_azimuth)) {
    throw std::invalid_argument("first_ball_azimuth must be finite");
  }
  if (!(mean_diameter > ball_diameter_nominal)) {
    throw std::invalid_argument("mean_diameter must exceed the ball diameter");
  }
  for (int contact = 1; contact <= kContactCount; ++contact) {
    check_positive(raceway_radius[contact - 1], "raceway_radius");
    const double s = osculation(contact);
    if (s < houpert::kOsculationMin || s > houpert::kOsculationMax) {
      std::ostringstream msg;
      msg << "osculation " << s << " at contact " << contact
          << " outside the supported range [" << houpert::kOsculationMin << ", "
          << houpert::kOsculationMax << "]";
      throw std::invalid_argument(msg.str());
    }
  }
}

Eigen::Vector2d BearingGeometry::contact_direction(int contact) const {
  const double c = std::cos(initial_contact_angle);
  const double s = std::sin(initial_contact_angle);
  switch (contact) {
    case 1: return {c, s};
    case 2: return {-c, s};
    case 3: return {-c, -s};
    case 4: return {c, -s};
    default: throw std::invalid_argument("contact must be 1..4");
  }
}

Eigen::Vector2d BearingGeometry::nominal_center(int contact) const {
  // The raceway curvature center sits behind the ball center along the
  // contact direction, so the distance between the two centers of a diagonal
  // equals the natural spring length at zero error and preload.
  const double offset = raceway_radius[contact - 1] - 0.5 * ball_diameter_nominal;
  return Eigen::Vector2d(pitch_radius(), 0.0) - offset * contact_direction(contact);
}

ErrorMap ErrorMap::zero(int ball_count) {
  ErrorMap map;
  map.ball_count = ball_count;
  map.center_radial_dev = Eigen::MatrixXd::Zero(ball_count, kContactCount);
  map.center_axial_dev = Eigen::MatrixXd::Zero(ball_count, kContactCount);
  map.raceway_radius_dev = Eigen::MatrixXd::Zero(ball_count, kContactCount);
  map.ball_diameter_dev = Eigen::VectorXd::Zero(ball_count);
  return map;
}

std::vector<std::string> ErrorMap::validate(const BearingGeometry& geom) const {
  if (ball_count != geom.ball_count) {
    throw std::invalid_argument("error map ball count does not match the bearing");
  }
  if (center_radial_dev.rows() != ball_count || center_axial_dev.rows() != ball_count ||
      raceway_radius_dev.rows() != ball_count || ball_diameter_dev.size() != ball_count) {
    throw std::invalid_argument("error map arrays must have one row per ball");
  }
  if (!center_radial_dev.allFinite() || !center_axial_dev.allFinite() ||
      !raceway_radius_dev.allFinite() || !ball_diameter_dev.allFinite() ||
      !std::isfinite(preload)) {
    throw std::invalid_argument("error map contains non-finite entries");
  }

  std::vector<std::string> warnings;
  constexpr double kLarge = 0.5;  // [mm] deviations above this are suspicious
  auto warn_large = [&warnings](double value, const char* what, int ball, int contact) {
    if (std::abs(value) > kLarge) {
      std::ostringstream msg;
      msg << what << " deviation " << value << " mm at ball " << ball + 1;
      if (contact > 0) msg << ", contact " << contact;
      msg << " exceeds " << kLarge << " mm";
      warnings.push_back(msg.str());
    }
  };

  for (int b = 0; b < ball_count; ++b) {
    if (!(ball_diameter(geom, b) > 0.0)) {
      throw std::invalid_argument("ball diameter including deviations must stay positive");
    }
    warn_large(ball_diameter_dev[b], "ball diameter", b, 0);
    for (int contact = 1; contact <= kContactCount; ++contact) {
      warn_large(center_radial_dev(b, contact - 1), "radial center", b, contact);
      warn_large(center_axial_dev(b, contact - 1), "axial center", b, contact);
      warn_large(raceway_radius_dev(b, contact - 1), "raceway radius", b, contact);
    }
  }
  return warnings;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream stream(line);
  while (std::getline(stream, field, ',')) {
    const auto first = field.find_first_not_of(" \t\r");
    const auto last = field.find_last_not_of(" \t\r");
    fields.push_back(first == std::string::npos ? std::string()
                                                : field.substr(first, last - first + 1));
  }
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

bool next_row(std::istream& stream, std::vector<std::string>& fields) {
  std::string line;
  while (std::getline(stream, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    fields = split_csv_line(line);
    return true;
  }
  return false;
}

double parse_number(const std::string& field, const char* file) {
  std::size_t consumed = 0;
  double value = 0.0;
  try {
    value = std::stod(field, &consumed);
  } catch (const std::exception&) {
    throw std::invalid_argument(std::string(file) + ": cannot parse number '" + field + "'");
  }
  if (consumed != field.size()) {
    throw std::invalid_argument(std::string(file) + ": cannot parse number '" + field + "'");
  }
  return value;
}

int parse_index(const std::string& field, int max_value, const char* what, const char* file) {
  const double value = parse_number(field, file);
  const int index = static_cast<int>(value);
  if (value != index || index < 1 || index > max_value) {
    throw std::invalid_argument(std::string(file) + ": " + what + " '" + field +
                                "' out of range 1.." + std::to_string(max_value));
  }
  return index;
}

void expect_header(const std::vector<std::string>& fields,
                   std::initializer_list<const char*> expected, const char* file) {
  bool matches = fields.size() == expected.size();
  if (matches) {
    auto it = expected.begin();
    for (const auto& field : fields) {
      if (field != *it++) {
        matches = false;
        break;
      }
    }
  }
  if (!matches) {
    throw std::invalid_argument(std::string(file) + ": unexpected header; expected '" +
                                [&expected] {
                                  std::string joined;
                                  for (const char* name : expected) {
                                    if (!joined.empty()) joined += ',';
                                    joined += name;
                                  }
                                  return joined;
                                }() +
                                "'");
  }
}

}  // namespace

ErrorMap load_error_map(std::istream& centers_csv, std::istream& balls_csv,
                        int ball_count, double preload) {
  ErrorMap map = ErrorMap::zero(ball_count);
  map.preload = preload;

  std::vector<std::string> fields;
  if (!next_row(centers_csv, fields)) {
    throw std::invalid_argument("centers CSV is empty");
  }
  expect_header(fields, {"ball", "contact", "dR_center_mm", "dz_center_mm", "dRc_mm"},
                "centers CSV");
  while (next_row(centers_csv, fields)) {
    if (fields.size() != 5) {
      throw std::invalid_argument("centers CSV: expected 5 fields per row");
    }
    const int ball = parse_index(fields[0], ball_count, "ball", "centers CSV");
    const int contact = parse_index(fields[1], kContactCount, "contact", "centers CSV");
    map.center_radial_dev(ball - 1, contact - 1) = parse_number(fields[2], "centers CSV");
    map.center_axial_dev(ball - 1, contact - 1) = parse_number(fields[3], "centers CSV");
    map.raceway_radius_dev(ball - 1, contact - 1) = parse_number(fields[4], "centers CSV");
  }

  if (!next_row(balls_csv, fields)) {
    throw std::invalid_argument("balls CSV is empty");
  }
  expect_header(fields, {"ball", "dDw_mm"}, "balls CSV");
  while (next_row(balls_csv, fields)) {
    if (fields.size() != 2) {
      throw std::invalid_argument("balls CSV: expected 2 fields per row");
    }
    const int ball = parse_index(fields[0], ball_count, "ball", "balls CSV");
    map.ball_diameter_dev[ball - 1] = parse_number(fields[1], "balls CSV");
  }
  return map;
}

ErrorMap load_error_map_files(const std::string& centers_path,
                              const std::string& balls_path, int ball_count,
                              double preload) {
  std::ifstream centers(centers_path);
  if (!centers) {
    throw std::invalid_argument("cannot open centers CSV '" + centers_path + "'");
  }
  std::ifstream balls(balls_path);
  if (!balls) {
    throw std::invalid_argument("cannot open balls CSV '" + balls_path + "'");
  }
  return load_error_map(centers, balls, ball_count, preload);
}

CenterPositions initial_centers(const BearingGeometry& geom, const ErrorMap& errors) {
  const int B = geom.ball_count;
  CenterPositions centers;
  centers.azimuth.resize(B);
  for (int b = 0; b < B; ++b) centers.azimuth[b] = geom.ball_azimuth(b);
  for (int contact = 1; contact <= kContactCount; ++contact) {
    const Eigen::Vector2d nominal = geom.nominal_center(contact);
    Eigen::VectorXd radial(B), axial(B);
    for (int b = 0; b < B; ++b) {
      radial[b] = nominal.x() + errors.center_radial_dev(b, contact - 1);
      axial[b] = nominal.y() + errors.center_axial_dev(b, contact - 1);
    }
    centers.radial[contact - 1] = std::move(radial);
    centers.axial[contact - 1] = std::move(axial);
  }
  return centers;
}

namespace {

void check_master_span(std::span<const double> d, int ball_count, const char* name) {
  if (!d.empty() && d.size() != static_cast<std::size_t>(4 * ball_count)) {
    throw std::invalid_argument(std::string(name) +
                                " must hold 4 displacements per ball or be empty");
  }
}

CenterPositions apply_pose(const CenterPositions& init, const RigidBodyPose& pose,
                           std::span<const double> d_out, std::span<const double> d_in,
                           Kinematics kinematics) {
  const int B = init.ball_count();
  check_master_span(d_out, B, "d_out");
  check_master_span(d_in, B, "d_in");

  const double alpha = pose.alpha_eff();
  const double beta = pose.beta_eff();
  const double sin_a = std::sin(alpha), cos_a = std::cos(alpha);
  const double sin_b = std::sin(beta), cos_b = std::cos(beta);

  CenterPositions out;
  out.azimuth = init.azimuth;
  for (int contact = 1; contact <= kContactCount; ++contact) {
    const bool outer = contact_on_outer_ring(contact);
    const std::span<const double> d = outer ? d_out : d_in;
    const int slot = contact_master_slot(contact);
    Eigen::VectorXd radial(B), axial(B);
    for (int b = 0; b < B; ++b) {
      const double r0 = init.radial[contact - 1][b];
      const double z0 = init.axial[contact - 1][b];
      const double dr = d.empty() ? 0.0 : d[master_index(b, slot)];
      const double dz = d.empty() ? 0.0 : d[master_index(b, slot + 1)];
      if (outer) {
        radial[b] = r0 + dr;
        axial[b] = z0 + dz;
        continue;
      }
      const double phi = init.azimuth[b];
      const double cos_p = std::cos(phi), sin_p = std::sin(phi);
      const double radial_load = pose.delta_r * std::cos(pose.phi_r - phi);
      if (kinematics == Kinematics::Exact) {
        radial[b] = r0 * (cos_a * sin_p * sin_p + cos_b * cos_p * cos_p) +
                    (pose.x + z0 * sin_b) * cos_p + (pose.y - z0 * sin_a) * sin_p +
                    radial_load + dr;
        axial[b] = z0 * cos_a * cos_b + r0 * (sin_a * sin_p - sin_b * cos_p) + pose.z -
                   pose.delta_a + dz;
      } else {
        radial[b] = r0 + (pose.x + z0 * beta) * cos_p + (pose.y - z0 * alpha) * sin_p +
                    radial_load + dr;
        axial[b] = z0 + r0 * (alpha * sin_p - beta * cos_p) + pose.z - pose.delta_a + dz;
      }
    }
    out.radial[contact - 1] = std::move(radial);
    out.axial[contact - 1] = std::move(axial);
  }
  return out;
}

}  // namespace

CenterPositions deformed_centers_idle(const CenterPositions& init, const RigidBodyPose& pose,
                                      std::span<const double> d_out,
                                      std::span<const double> d_in, Kinematics kinematics) {
  RigidBodyPose idle = pose;
  idle.delta_a = 0.0;
  idle.delta_r = 0.0;
  idle.theta_t = 0.0;
  return apply_pose(init, idle, d_out, d_in, kinematics);
}

CenterPositions deformed_centers_loaded(const CenterPositions& init, const RigidBodyPose& pose,
                                        std::span<const double> d_out,
                                        std::span<const double> d_in, Kinematics kinematics) {
  return apply_pose(init, pose, d_out, d_in, kinematics);
}

double natural_length(const BearingGeometry& geom, const ErrorMap& errors, int ball,
                      int diagonal) {
  const int first = diagonal_first_contact(diagonal);
  const int second = diagonal_second_contact(diagonal);
  const double length = errors.raceway_radius(geom, ball, first) +
                        errors.raceway_radius(geom, ball, second) -
                        errors.ball_diameter(geom, ball);
  if (!(length > 0.0)) {
    throw std::domain_error("degenerate conformity: natural spring length is not positive");
  }
  return length;
}

double spring_length(const CenterPositions& centers, int ball, int diagonal) {
  const int first = diagonal_first_contact(diagonal);
  const int second = diagonal_second_contact(diagonal);
  const double dr = centers.radial[second - 1][ball] - centers.radial[first - 1][ball];
  const double dz = centers.axial[second - 1][ball] - centers.axial[first - 1][ball];
  return std::hypot(dr, dz);
}

double contact_angle(const CenterPositions& centers, int ball, int diagonal) {
  const int first = diagonal_first_contact(diagonal);
  const int second = diagonal_second_contact(diagonal);
  const double dr = centers.radial[second - 1][ball] - centers.radial[first - 1][ball];
  const double dz = centers.axial[second - 1][ball] - centers.axial[first - 1][ball];
  if (dr == 0.0 && dz == 0.0) {
    throw std::domain_error("contact angle undefined: raceway centers coincide");
  }
  return std::atan2(std::abs(dz), std::abs(dr));
}

}  // namespace slewload
