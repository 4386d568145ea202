#include "normflow/geometry.hpp"

#include "normflow/errors.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace normflow {

namespace {

using Triplets = std::vector<Eigen::Triplet<double>>;

void require_extents(const std::vector<double>& extents, std::size_t expected, GeometryKind kind) {
    if (extents.size() != expected) {
        std::ostringstream msg;
        msg << to_string(kind) << " expects " << expected << " extent(s), got " << extents.size();
        throw Error(ErrorCode::InvalidExtents, msg.str());
    }
    for (double e : extents) {
        if (!(e > 0.0) || !std::isfinite(e)) {
            throw Error(ErrorCode::InvalidExtents, "extents must be positive and finite");
        }
    }
}

void require_dimension(int given, int expected, GeometryKind kind) {
    if (given != expected) {
        std::ostringstream msg;
        msg << to_string(kind) << " requires dimension_n = " << expected << ", got " << given;
        throw Error(ErrorCode::InconsistentDimension, msg.str());
    }
}

// Second-difference couplings along one axis of a tensor grid.
void add_axis_stencil(Triplets& t, int nx, int ny, int axis, double h, bool periodic) {
    const double c = 1.0 / (h * h);
    const int len = axis == 0 ? nx : ny;
    for (int iy = 0; iy < ny; ++iy) {
        for (int ix = 0; ix < nx; ++ix) {
            const int row = ix + nx * iy;
            const int pos = axis == 0 ? ix : iy;
            t.emplace_back(row, row, -2.0 * c);
            for (int dir : {-1, 1}) {
                int q = pos + dir;
                if (q < 0 || q >= len) {
                    if (!periodic) continue;  // Dirichlet: ghost value is zero
                    q = (q + len) % len;
                }
                const int col = axis == 0 ? q + nx * iy : ix + nx * q;
                t.emplace_back(row, col, c);
            }
        }
    }
}

}  // namespace

std::string_view to_string(GeometryKind kind) {
    switch (kind) {
        case GeometryKind::IntervalDirichlet: return "interval";
        case GeometryKind::Circle: return "circle";
        case GeometryKind::RectangleDirichlet: return "rectangle";
        case GeometryKind::Torus2D: return "torus";
        case GeometryKind::RadialBallDirichlet: return "ball";
    }
    return "unknown";
}

std::optional<GeometryKind> parse_geometry_kind(std::string_view text) {
    if (text == "interval" || text == "IntervalDirichlet") return GeometryKind::IntervalDirichlet;
    if (text == "circle" || text == "Circle") return GeometryKind::Circle;
    if (text == "rectangle" || text == "RectangleDirichlet") return GeometryKind::RectangleDirichlet;
    if (text == "torus" || text == "Torus2D") return GeometryKind::Torus2D;
    if (text == "ball" || text == "RadialBallDirichlet") return GeometryKind::RadialBallDirichlet;
    return std::nullopt;
}

double unit_sphere_area(int n) {
    const double half = 0.5 * n;
    return 2.0 * std::pow(std::numbers::pi, half) / std::tgamma(half);
}

bool Geometry::is_periodic() const {
    return kind_ == GeometryKind::Circle || kind_ == GeometryKind::Torus2D;
}

GeometryPtr build_geometry(GeometryKind kind, std::vector<double> extents, int dimension_n,
                           int resolution) {
    if (resolution < 3) {
        throw Error(ErrorCode::InvalidResolution,
                    "resolution must be at least 3, got " + std::to_string(resolution));
    }
    std::shared_ptr<Geometry> g(new Geometry());
    g->kind_ = kind;
    g->resolution_ = resolution;
    const int N = resolution;
    Triplets triplets;

    switch (kind) {
        case GeometryKind::IntervalDirichlet:
        case GeometryKind::Circle: {
            require_extents(extents, 1, kind);
            require_dimension(dimension_n, 1, kind);
            const bool periodic = kind == GeometryKind::Circle;
            const double L = extents[0];
            const double h = L / N;
            const int nodes = periodic ? N : N - 1;
            const int offset = periodic ? 0 : 1;
            g->axis_nodes_ = {nodes};
            g->spacing_ = {h};
            g->weights_ = Vector::Constant(nodes, h);
            g->coordinates_.resize(nodes, 1);
            for (int i = 0; i < nodes; ++i) g->coordinates_(i, 0) = (i + offset) * h;
            add_axis_stencil(triplets, nodes, 1, 0, h, periodic);
            g->measure_ = L;
            break;
        }
        case GeometryKind::RectangleDirichlet:
        case GeometryKind::Torus2D: {
            require_extents(extents, 2, kind);
            require_dimension(dimension_n, 2, kind);
            const bool periodic = kind == GeometryKind::Torus2D;
            const double hx = extents[0] / N;
            const double hy = extents[1] / N;
            const int n1 = periodic ? N : N - 1;
            const int offset = periodic ? 0 : 1;
            g->axis_nodes_ = {n1, n1};
            g->spacing_ = {hx, hy};
            g->weights_ = Vector::Constant(static_cast<Eigen::Index>(n1) * n1, hx * hy);
            g->coordinates_.resize(static_cast<Eigen::Index>(n1) * n1, 2);
            for (int iy = 0; iy < n1; ++iy) {
                for (int ix = 0; ix < n1; ++ix) {
                    g->coordinates_(ix + n1 * iy, 0) = (ix + offset) * hx;
                    g->coordinates_(ix + n1 * iy, 1) = (iy + offset) * hy;
                }
            }
            add_axis_stencil(triplets, n1, n1, 0, hx, periodic);
            add_axis_stencil(triplets, n1, n1, 1, hy, periodic);
            g->measure_ = extents[0] * extents[1];
            break;
        }
        case GeometryKind::RadialBallDirichlet: {
            require_extents(extents, 1, kind);
            if (dimension_n < 1) {
                throw Error(ErrorCode::InconsistentDimension, "ball requires dimension_n >= 1");
            }
            const double R = extents[0];
            const double h = R / N;
            const int n = dimension_n;
            const double omega = unit_sphere_area(n);
            g->axis_nodes_ = {N};
            g->spacing_ = {h};
            g->weights_.resize(N);
            g->coordinates_.resize(N, 1);
            for (int i = 0; i < N; ++i) {
                const double r_in = i * h;
                const double r_out = (i + 1) * h;
                const double volume = omega * (std::pow(r_out, n) - std::pow(r_in, n)) / n;
                g->weights_[i] = volume;
                g->coordinates_(i, 0) = (i + 0.5) * h;
                // Face fluxes omega r^(n-1) (u_j - u_i) / h; the face at r = 0
                // carries no flux (reflection ghost), the face at R sees the
                // odd ghost -u_i.
                const double outer = omega * std::pow(r_out, n - 1) / (h * volume);
                if (i + 1 < N) {
                    triplets.emplace_back(i, i + 1, outer);
                    triplets.emplace_back(i, i, -outer);
                } else {
                    triplets.emplace_back(i, i, -2.0 * outer);
                }
                if (i > 0) {
                    const double inner = omega * std::pow(r_in, n - 1) / (h * volume);
                    triplets.emplace_back(i, i - 1, inner);
                    triplets.emplace_back(i, i, -inner);
                }
            }
            g->measure_ = omega * std::pow(R, n) / n;
            break;
        }
    }
    g->extents_ = std::move(extents);
    g->dimension_ = dimension_n;
    g->finalize(triplets);
    return g;
}

void Geometry::finalize(std::vector<Eigen::Triplet<double>>& triplets) {
    const Eigen::Index n = weights_.size();
    laplacian_.resize(n, n);
    laplacian_.setFromTriplets(triplets.begin(), triplets.end());
    laplacian_.makeCompressed();

    wall_coupling_ = Vector::Zero(n);
    spectral_bound_ = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        double row_sum = 0.0;
        double abs_sum = 0.0;
        for (SparseMatrix::InnerIterator it(laplacian_, i); it; ++it) {
            row_sum += it.value();
            abs_sum += std::abs(it.value());
            if (it.col() > i) edges_.push_back({i, it.col(), weights_[i] * it.value()});
        }
        spectral_bound_ = std::max(spectral_bound_, abs_sum);
        if (!is_periodic()) wall_coupling_[i] = -weights_[i] * row_sum;
    }
    // Periodic rows sum to zero exactly; Dirichlet row sums are the ghost couplings.
    if (is_periodic()) wall_coupling_.setZero();
}

Vector Geometry::apply_laplacian(const Vector& u) const { return laplacian_ * u; }

double Geometry::integrate(const Vector& f) const { return weights_.dot(f); }

double Geometry::energy_form(const Vector& u, const Vector& v) const {
    double sum = 0.0;
    for (const Edge& e : edges_) {
        sum += e.coupling * (u[e.i] - u[e.j]) * (v[e.i] - v[e.j]);
    }
    return sum + (wall_coupling_.array() * u.array() * v.array()).sum();
}

Field::Field(GeometryPtr geometry, Vector values)
    : geometry_(std::move(geometry)), values_(std::move(values)) {
    if (!geometry_) throw Error(ErrorCode::GeometryMismatch, "field without geometry");
    if (values_.size() != geometry_->node_count()) {
        throw Error(ErrorCode::GeometryMismatch,
                    "field has " + std::to_string(values_.size()) + " values, geometry has " +
                        std::to_string(geometry_->node_count()) + " nodes");
    }
    if (!values_.allFinite()) throw Error(ErrorCode::NonFiniteState, "field contains NaN or Inf");
}

Field Field::constant(GeometryPtr geometry, double value) {
    const Eigen::Index n = geometry->node_count();
    return Field(std::move(geometry), Vector::Constant(n, value));
}

Field Field::sample(GeometryPtr geometry, const std::function<double(double, double)>& f) {
    const auto& xy = geometry->coordinates();
    Vector v(xy.rows());
    for (Eigen::Index i = 0; i < xy.rows(); ++i) {
        v[i] = f(xy(i, 0), xy.cols() > 1 ? xy(i, 1) : 0.0);
    }
    return Field(std::move(geometry), std::move(v));
}

namespace {
void require_same(const Geometry& geom, const Field& u) {
    if (&u.geometry() != &geom) {
        throw Error(ErrorCode::GeometryMismatch, "field lives on a different geometry");
    }
}
}  // namespace

Field laplacian_apply(const Geometry& geom, const Field& u) {
    require_same(geom, u);
    return u.with_values(geom.apply_laplacian(u.values()));
}

double integrate(const Geometry& geom, const Field& f) {
    require_same(geom, f);
    return geom.integrate(f.values());
}

double dirichlet_energy(const Geometry& geom, const Field& u) {
    require_same(geom, u);
    return geom.energy(u.values());
}

double weighted_gradient_energy(const Geometry& geom, const Field& u, double m) {
    require_same(geom, u);
    if (!(m >= 0.0)) throw Error(ErrorCode::NonpositiveField, "weight exponent m must be >= 0");
    if (m == 0.0) return geom.energy(u.values());
    const bool even_integer = std::floor(m) == m && std::fmod(m, 2.0) == 0.0;
    if (!even_integer && u.min() < 0.0) {
        throw Error(ErrorCode::NonpositiveField,
                    "weighted gradient energy with fractional or odd m needs u >= 0");
    }
    const Vector lifted = u.values().array().pow(m + 1.0).matrix();
    return geom.energy_form(lifted, u.values()) / (m + 1.0);
}

}  // namespace normflow
