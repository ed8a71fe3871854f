#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "nglod/vec3.hpp"

namespace nglod {

/// Ground-truth signed distance source over the bounding volume [-1,1]^3.
/// Implementations are immutable after construction and safe to query from any
/// number of threads.
class DistanceOracle {
public:
    virtual ~DistanceOracle() = default;

    /// Signed distance, negative strictly inside.
    virtual double distance(const Vec3& x) const = 0;

    /// `count` points on the zero level set, deterministic in `seed`.
    virtual std::vector<Vec3> sample_surface(std::size_t count, std::uint64_t seed) const = 0;
};

enum class SdfKind { sphere, box, torus, plane, csg_union, intersection, difference, smooth_union };

std::string_view to_string(SdfKind kind);

/// Analytic primitive or CSG node.
///
/// Primitives return exact distances. CSG nodes combine children with
/// min / max / polynomial smooth-min, which yields a lower bound on the true
/// distance rather than the exact value; that is still safe for sphere tracing.
///
/// Parameters by kind:
///   sphere        {r}
///   box           {hx, hy, hz}
///   torus         {R, r}          ring in the xz-plane, axis y
///   plane         {nx, ny, nz, h} f = n.x + h with n normalized on construction
///   smooth_union  {k}
/// Primitives carry an optional translation (`center`).
class AnalyticSdf final : public DistanceOracle {
public:
    /// Validating constructor; throws StructuralError on arity or parameter errors.
    AnalyticSdf(SdfKind kind, std::vector<double> params, std::vector<AnalyticSdf> children = {},
                Vec3 center = {});

    static AnalyticSdf sphere(double radius, Vec3 center = {});
    static AnalyticSdf box(Vec3 half_extents, Vec3 center = {});
    static AnalyticSdf torus(double major_radius, double minor_radius, Vec3 center = {});
    static AnalyticSdf plane(Vec3 normal, double offset);
    static AnalyticSdf csg_union(std::vector<AnalyticSdf> children);
    static AnalyticSdf intersection(std::vector<AnalyticSdf> children);
    static AnalyticSdf difference(AnalyticSdf a, AnalyticSdf b);
    static AnalyticSdf smooth_union(double k, AnalyticSdf a, AnalyticSdf b);

    double distance(const Vec3& x) const override;
    std::vector<Vec3> sample_surface(std::size_t count, std::uint64_t seed) const override;

    SdfKind kind() const { return kind_; }
    const std::vector<double>& params() const { return params_; }
    const std::vector<AnalyticSdf>& children() const { return children_; }
    const Vec3& center() const { return center_; }

    /// S-expression form accepted by parse_scene.
    std::string to_sexpr() const;

private:
    SdfKind kind_;
    std::vector<double> params_;
    std::vector<AnalyticSdf> children_;
    Vec3 center_;
};

double eval_analytic(const AnalyticSdf& sdf, const Vec3& x);

/// Parses the scene grammar:
///
///   expr   := '(' name number* option* expr* ')'
///   option := ':center' number number number
///   name   := sphere | box | torus | plane | union | intersection
///           | difference | smooth-union
///
/// ';' starts a comment running to end of line.
/// Example: (difference (box 0.4 0.4 0.4) (sphere 0.5))
AnalyticSdf parse_scene(std::string_view text);
AnalyticSdf load_scene(const std::filesystem::path& path);

struct TriangleMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<std::uint32_t, 3>> triangles;
    bool normalized = false;

    /// Throws StructuralError on out-of-range indices or non-finite vertices.
    void validate() const;
    double triangle_area(std::size_t t) const;
};

/// ASCII OBJ: `v` and `f` records; polygons are fan-triangulated, other
/// records ignored.
TriangleMesh load_obj(const std::filesystem::path& path);
TriangleMesh parse_obj(std::string_view text);
void save_obj(const TriangleMesh& mesh, const std::filesystem::path& path);

/// Uniform scale and translation so that the bounding box is centred and its
/// longest side spans [-1+margin, 1-margin].
TriangleMesh normalize_mesh(const TriangleMesh& mesh, double margin);

struct SignedDistanceQueryResult {
    double distance = 0.0;
    Vec3 nearest_point;
};

Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

/// Exact distance to the nearest triangle (brute force).
SignedDistanceQueryResult mesh_unsigned_distance(const TriangleMesh& mesh, const Vec3& x);

struct SignVote {
    int sign = 1;            // -1 inside, +1 outside
    int inside_votes = 0;
    int outside_votes = 0;
    bool ambiguous = false;  // no ray produced a usable parity
};

/// Fixed jittered stabbing directions shared by every mesh sign query.
const std::array<Vec3, 8>& stabbing_directions();

/// Ray-stabbing inside test: crossings are counted along each of the eight
/// stabbing directions and the per-ray parities are majority-voted. Rays that
/// graze an edge or vertex abstain; ties and all-abstain cases report outside.
SignVote mesh_sign(const TriangleMesh& mesh, const Vec3& x);

/// Signed distance to a mesh: unsigned distance with the ray-stabbing sign.
class MeshSdf final : public DistanceOracle {
public:
    explicit MeshSdf(TriangleMesh mesh);

    double distance(const Vec3& x) const override;
    /// Area-weighted surface sampling.
    std::vector<Vec3> sample_surface(std::size_t count, std::uint64_t seed) const override;

    const TriangleMesh& mesh() const { return mesh_; }

private:
    TriangleMesh mesh_;
};

/// Loads `.obj` meshes (normalized with the given margin) or scene files.
std::unique_ptr<DistanceOracle> load_oracle(const std::filesystem::path& path, double mesh_margin = 0.1);

}  // namespace nglod
