#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <functional>
#include <memory>
#include <optional>
#include <string_view>
#include <vector>

namespace normflow {

using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

enum class GeometryKind {
    IntervalDirichlet,
    Circle,
    RectangleDirichlet,
    Torus2D,
    RadialBallDirichlet,
};

std::string_view to_string(GeometryKind kind);
std::optional<GeometryKind> parse_geometry_kind(std::string_view text);

class Geometry;
using GeometryPtr = std::shared_ptr<const Geometry>;

/// Uniform model domain with a second-order Laplacian stencil and a
/// positive diagonal quadrature.
///
/// The stencil `L` and the weights `w` are built so that `diag(w) * L` is
/// symmetric. That symmetry is the discrete summation-by-parts identity:
/// `sum_i w_i u_i (L v)_i == sum_i w_i v_i (L u)_i`, which is what makes
/// the discrete multipliers conserve their norms exactly.
///
/// Node layouts:
///  - IntervalDirichlet: vertex-centred interior nodes x_i = i h, i = 1..N-1.
///  - Circle: x_i = i h, i = 0..N-1, periodic.
///  - RectangleDirichlet / Torus2D: tensor products of the above, x-fastest.
///  - RadialBallDirichlet: cell-centred radii r_i = (i + 1/2) h, i = 0..N-1
///    with h = R / N. The weights are exact shell volumes, the origin flux
///    vanishes by reflection (u_r(0) = 0) and the wall uses an odd ghost
///    value so u(R) = 0.
///
/// Immutable after construction; share freely across threads.
class Geometry {
public:
    GeometryKind kind() const { return kind_; }
    const std::vector<double>& extents() const { return extents_; }
    int dimension() const { return dimension_; }
    int resolution() const { return resolution_; }
    Eigen::Index node_count() const { return weights_.size(); }
    int grid_axes() const { return static_cast<int>(spacing_.size()); }
    // Unknowns along one grid axis.
    int axis_nodes(int axis) const { return axis_nodes_.at(axis); }
    const std::vector<double>& spacing() const { return spacing_; }
    const Vector& weights() const { return weights_; }
    const SparseMatrix& laplacian() const { return laplacian_; }
    // node_count x grid_axes; radial geometries store r.
    const Eigen::MatrixXd& coordinates() const { return coordinates_; }

    bool is_periodic() const;
    bool is_dirichlet() const { return !is_periodic(); }
    bool is_radial() const { return kind_ == GeometryKind::RadialBallDirichlet; }

    // Exact measure of the continuous domain.
    double measure() const { return measure_; }
    // Gershgorin bound on the spectral radius of the Laplacian stencil.
    double spectral_radius_bound() const { return spectral_bound_; }

    // Raw-array kernels; the Field-level free functions below add checks.
    Vector apply_laplacian(const Vector& u) const;
    double integrate(const Vector& f) const;
    // -integrate(u * L v), evaluated in edge form:
    //   sum_edges a_ij (u_i - u_j)(v_i - v_j) + sum_i c_i u_i v_i.
    double energy_form(const Vector& u, const Vector& v) const;
    double energy(const Vector& u) const { return energy_form(u, u); }

private:
    friend GeometryPtr build_geometry(GeometryKind, std::vector<double>, int, int);
    Geometry() = default;
    void finalize(std::vector<Eigen::Triplet<double>>& triplets);

    struct Edge {
        Eigen::Index i;
        Eigen::Index j;
        double coupling;  // w_i L_ij == w_j L_ji
    };

    GeometryKind kind_ = GeometryKind::IntervalDirichlet;
    std::vector<double> extents_;
    int dimension_ = 1;
    int resolution_ = 0;
    std::vector<int> axis_nodes_;
    std::vector<double> spacing_;
    Vector weights_;
    SparseMatrix laplacian_;
    Eigen::MatrixXd coordinates_;
    std::vector<Edge> edges_;
    Vector wall_coupling_;  // -w_i * (row sum of L)_i, zero for periodic kinds
    double measure_ = 0.0;
    double spectral_bound_ = 0.0;
};

/// Builds a model domain.
///
/// `extents` holds one length (interval, circle, ball radius) or two side
/// lengths (rectangle, torus). `resolution` is the number of grid cells per
/// axis and must be at least 3. `dimension_n` must be 1 for the 1D flat
/// kinds, 2 for the 2D flat kinds and any n >= 1 for the radial ball.
GeometryPtr build_geometry(GeometryKind kind, std::vector<double> extents, int dimension_n,
                           int resolution);

// Surface area of the unit sphere in R^n.
double unit_sphere_area(int n);

/// Real samples over a geometry's nodes. Entries are always finite.
class Field {
public:
    Field(GeometryPtr geometry, Vector values);

    static Field constant(GeometryPtr geometry, double value);
    // f(x, y) with y = 0 on 1D and radial geometries (x is r there).
    static Field sample(GeometryPtr geometry, const std::function<double(double, double)>& f);

    const Geometry& geometry() const { return *geometry_; }
    const GeometryPtr& geometry_ptr() const { return geometry_; }
    const Vector& values() const { return values_; }
    Eigen::Index size() const { return values_.size(); }
    double operator[](Eigen::Index i) const { return values_[i]; }
    double max() const { return values_.maxCoeff(); }
    double min() const { return values_.minCoeff(); }

    Field with_values(Vector values) const { return Field(geometry_, std::move(values)); }

private:
    GeometryPtr geometry_;
    Vector values_;
};

Field laplacian_apply(const Geometry& geom, const Field& u);
double integrate(const Geometry& geom, const Field& f);
double dirichlet_energy(const Geometry& geom, const Field& u);
/// Discrete  int u^m |grad u|^2, evaluated as (1/(m+1)) <grad u^(m+1), grad u>
/// in the same edge form as the Dirichlet energy. Requires u >= 0 unless m
/// is an even integer, and m >= 0.
double weighted_gradient_energy(const Geometry& geom, const Field& u, double m);

}  // namespace normflow
