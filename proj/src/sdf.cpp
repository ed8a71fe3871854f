#include "nglod/sdf.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "nglod/error.hpp"
#include "nglod/rng.hpp"
#include "nglod/sampling.hpp"

namespace nglod {

std::string_view to_string(SdfKind kind) {
    switch (kind) {
        case SdfKind::sphere: return "sphere";
        case SdfKind::box: return "box";
        case SdfKind::torus: return "torus";
        case SdfKind::plane: return "plane";
        case SdfKind::csg_union: return "union";
        case SdfKind::intersection: return "intersection";
        case SdfKind::difference: return "difference";
        case SdfKind::smooth_union: return "smooth-union";
    }
    return "?";
}

namespace {

std::size_t expected_params(SdfKind kind) {
    switch (kind) {
        case SdfKind::sphere: return 1;
        case SdfKind::box: return 3;
        case SdfKind::torus: return 2;
        case SdfKind::plane: return 4;
        case SdfKind::smooth_union: return 1;
        default: return 0;
    }
}

bool is_primitive(SdfKind kind) {
    return kind == SdfKind::sphere || kind == SdfKind::box || kind == SdfKind::torus ||
           kind == SdfKind::plane;
}

// Polynomial smooth minimum.
double smooth_min(double a, double b, double k) {
    const double h = std::clamp(0.5 + 0.5 * (b - a) / k, 0.0, 1.0);
    return b + (a - b) * h - k * h * (1.0 - h);
}

}  // namespace

AnalyticSdf::AnalyticSdf(SdfKind kind, std::vector<double> params, std::vector<AnalyticSdf> children,
                         Vec3 center)
    : kind_(kind), params_(std::move(params)), children_(std::move(children)), center_(center) {
    const auto name = std::string(to_string(kind_));
    if (params_.size() != expected_params(kind_)) {
        throw StructuralError(name + ": expected " + std::to_string(expected_params(kind_)) +
                              " parameters, got " + std::to_string(params_.size()));
    }
    for (double p : params_) {
        if (!std::isfinite(p)) throw StructuralError(name + ": non-finite parameter");
    }
    if (!is_finite(center_)) throw StructuralError(name + ": non-finite center");

    switch (kind_) {
        case SdfKind::sphere:
            if (params_[0] <= 0.0) throw StructuralError("sphere: radius must be positive");
            break;
        case SdfKind::box:
            if (params_[0] < 0.0 || params_[1] < 0.0 || params_[2] < 0.0) {
                throw StructuralError("box: half extents must be non-negative");
            }
            break;
        case SdfKind::torus:
            if (params_[0] <= 0.0 || params_[1] <= 0.0) {
                throw StructuralError("torus: radii must be positive");
            }
            break;
        case SdfKind::plane: {
            const Vec3 n{params_[0], params_[1], params_[2]};
            const double len = length(n);
            if (len == 0.0) throw StructuralError("plane: zero normal");
            params_[0] /= len;
            params_[1] /= len;
            params_[2] /= len;
            break;
        }
        case SdfKind::smooth_union:
            if (params_[0] <= 0.0) throw StructuralError("smooth-union: k must be positive");
            break;
        default:
            break;
    }

    if (is_primitive(kind_)) {
        if (!children_.empty()) throw StructuralError(name + ": primitives take no children");
    } else if (kind_ == SdfKind::difference || kind_ == SdfKind::smooth_union) {
        if (children_.size() != 2) throw StructuralError(name + ": expected exactly 2 children");
    } else if (children_.size() < 2) {
        throw StructuralError(name + ": expected at least 2 children");
    }
}

AnalyticSdf AnalyticSdf::sphere(double radius, Vec3 center) {
    return AnalyticSdf(SdfKind::sphere, {radius}, {}, center);
}

AnalyticSdf AnalyticSdf::box(Vec3 half_extents, Vec3 center) {
    return AnalyticSdf(SdfKind::box, {half_extents.x, half_extents.y, half_extents.z}, {}, center);
}

AnalyticSdf AnalyticSdf::torus(double major_radius, double minor_radius, Vec3 center) {
    return AnalyticSdf(SdfKind::torus, {major_radius, minor_radius}, {}, center);
}

AnalyticSdf AnalyticSdf::plane(Vec3 normal, double offset) {
    return AnalyticSdf(SdfKind::plane, {normal.x, normal.y, normal.z, offset});
}

AnalyticSdf AnalyticSdf::csg_union(std::vector<AnalyticSdf> children) {
    return AnalyticSdf(SdfKind::csg_union, {}, std::move(children));
}

AnalyticSdf AnalyticSdf::intersection(std::vector<AnalyticSdf> children) {
    return AnalyticSdf(SdfKind::intersection, {}, std::move(children));
}

AnalyticSdf AnalyticSdf::difference(AnalyticSdf a, AnalyticSdf b) {
    std::vector<AnalyticSdf> c;
    c.push_back(std::move(a));
    c.push_back(std::move(b));
    return AnalyticSdf(SdfKind::difference, {}, std::move(c));
}

AnalyticSdf AnalyticSdf::smooth_union(double k, AnalyticSdf a, AnalyticSdf b) {
    std::vector<AnalyticSdf> c;
    c.push_back(std::move(a));
    c.push_back(std::move(b));
    return AnalyticSdf(SdfKind::smooth_union, {k}, std::move(c));
}

double AnalyticSdf::distance(const Vec3& x) const {
    const Vec3 p = x - center_;
    switch (kind_) {
        case SdfKind::sphere:
            return length(p) - params_[0];
        case SdfKind::box: {
            const Vec3 q = cwise_abs(p) - Vec3{params_[0], params_[1], params_[2]};
            const double outside = length(cwise_max(q, Vec3{}));
            const double inside = std::min(std::max(q.x, std::max(q.y, q.z)), 0.0);
            return outside + inside;
        }
        case SdfKind::torus: {
            const double ring = std::sqrt(p.x * p.x + p.z * p.z) - params_[0];
            return std::sqrt(ring * ring + p.y * p.y) - params_[1];
        }
        case SdfKind::plane:
            return p.x * params_[0] + p.y * params_[1] + p.z * params_[2] + params_[3];
        case SdfKind::csg_union: {
            double d = std::numeric_limits<double>::infinity();
            for (const auto& c : children_) d = std::min(d, c.distance(x));
            return d;
        }
        case SdfKind::intersection: {
            double d = -std::numeric_limits<double>::infinity();
            for (const auto& c : children_) d = std::max(d, c.distance(x));
            return d;
        }
        case SdfKind::difference:
            return std::max(children_[0].distance(x), -children_[1].distance(x));
        case SdfKind::smooth_union:
            return smooth_min(children_[0].distance(x), children_[1].distance(x), params_[0]);
    }
    return 0.0;
}

std::vector<Vec3> AnalyticSdf::sample_surface(std::size_t count, std::uint64_t seed) const {
    return sample_surface_sdf(*this, count, seed);
}

std::string AnalyticSdf::to_sexpr() const {
    std::ostringstream os;
    os.precision(17);
    os << '(' << to_string(kind_);
    for (double p : params_) os << ' ' << p;
    if (is_primitive(kind_) && center_ != Vec3{}) {
        os << " :center " << center_.x << ' ' << center_.y << ' ' << center_.z;
    }
    for (const auto& c : children_) os << ' ' << c.to_sexpr();
    os << ')';
    return os.str();
}

double eval_analytic(const AnalyticSdf& sdf, const Vec3& x) { return sdf.distance(x); }

// ---------------------------------------------------------------------------
// Scene parsing

namespace {

class SceneParser {
public:
    explicit SceneParser(std::string_view text) : text_(text) {}

    AnalyticSdf parse_document() {
        AnalyticSdf root = parse_expr();
        skip_space();
        if (pos_ != text_.size()) fail("trailing input");
        return root;
    }

private:
    [[noreturn]] void fail(const std::string& what) const {
        throw StructuralError("scene: " + what + " at offset " + std::to_string(pos_));
    }

    void skip_space() {
        while (pos_ < text_.size()) {
            const char c = text_[pos_];
            if (c == ';') {
                while (pos_ < text_.size() && text_[pos_] != '\n') ++pos_;
            } else if (std::isspace(static_cast<unsigned char>(c))) {
                ++pos_;
            } else {
                break;
            }
        }
    }

    std::string_view atom() {
        skip_space();
        const std::size_t start = pos_;
        while (pos_ < text_.size()) {
            const char c = text_[pos_];
            if (c == '(' || c == ')' || c == ';' || std::isspace(static_cast<unsigned char>(c))) break;
            ++pos_;
        }
        if (start == pos_) fail("expected token");
        return text_.substr(start, pos_ - start);
    }

    static bool parse_number(std::string_view s, double& out) {
        const auto* end = s.data() + s.size();
        const auto [ptr, ec] = std::from_chars(s.data(), end, out);
        return ec == std::errc{} && ptr == end;
    }

    double number() {
        const auto tok = atom();
        double v = 0.0;
        if (!parse_number(tok, v)) fail("expected number, got '" + std::string(tok) + "'");
        return v;
    }

    AnalyticSdf parse_expr() {
        skip_space();
        if (pos_ >= text_.size() || text_[pos_] != '(') fail("expected '('");
        ++pos_;
        const std::string name(atom());
        SdfKind kind;
        if (name == "sphere") kind = SdfKind::sphere;
        else if (name == "box") kind = SdfKind::box;
        else if (name == "torus") kind = SdfKind::torus;
        else if (name == "plane") kind = SdfKind::plane;
        else if (name == "union") kind = SdfKind::csg_union;
        else if (name == "intersection") kind = SdfKind::intersection;
        else if (name == "difference") kind = SdfKind::difference;
        else if (name == "smooth-union") kind = SdfKind::smooth_union;
        else fail("unknown shape '" + name + "'");

        std::vector<double> params;
        std::vector<AnalyticSdf> children;
        Vec3 center;
        for (;;) {
            skip_space();
            if (pos_ >= text_.size()) fail("unterminated expression");
            const char c = text_[pos_];
            if (c == ')') {
                ++pos_;
                break;
            }
            if (c == '(') {
                children.push_back(parse_expr());
                continue;
            }
            const auto tok = atom();
            if (tok == ":center") {
                center = {number(), number(), number()};
                continue;
            }
            if (!children.empty()) fail("parameters must precede children");
            double v = 0.0;
            if (!parse_number(tok, v)) fail("unexpected token '" + std::string(tok) + "'");
            params.push_back(v);
        }
        return AnalyticSdf(kind, std::move(params), std::move(children), center);
    }

    std::string_view text_;
    std::size_t pos_ = 0;
};

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

AnalyticSdf parse_scene(std::string_view text) { return SceneParser(text).parse_document(); }

AnalyticSdf load_scene(const std::filesystem::path& path) { return parse_scene(read_text(path)); }

// ---------------------------------------------------------------------------
// Meshes

void TriangleMesh::validate() const {
    for (const auto& v : vertices) {
        if (!is_finite(v)) throw StructuralError("mesh: non-finite vertex");
    }
    for (const auto& t : triangles) {
        for (auto i : t) {
            if (i >= vertices.size()) throw StructuralError("mesh: triangle index out of range");
        }
    }
}

double TriangleMesh::triangle_area(std::size_t t) const {
    const auto& tri = triangles[t];
    const Vec3& a = vertices[tri[0]];
    return 0.5 * length(cross(vertices[tri[1]] - a, vertices[tri[2]] - a));
}

TriangleMesh parse_obj(std::string_view text) {
    TriangleMesh mesh;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag)) continue;
        if (tag == "v") {
            Vec3 v;
            if (!(ls >> v.x >> v.y >> v.z)) {
                throw StructuralError("obj: bad vertex on line " + std::to_string(line_no));
            }
            mesh.vertices.push_back(v);
        } else if (tag == "f") {
            std::vector<std::uint32_t> face;
            std::string tok;
            while (ls >> tok) {
                const auto slash = tok.find('/');
                const std::string idx = tok.substr(0, slash);
                long long i = 0;
                try {
                    i = std::stoll(idx);
                } catch (const std::exception&) {
                    throw StructuralError("obj: bad face index on line " + std::to_string(line_no));
                }
                const auto n = static_cast<long long>(mesh.vertices.size());
                const long long resolved = i > 0 ? i - 1 : n + i;
                if (i == 0 || resolved < 0 || resolved >= n) {
                    throw StructuralError("obj: face index out of range on line " + std::to_string(line_no));
                }
                face.push_back(static_cast<std::uint32_t>(resolved));
            }
            if (face.size() < 3) throw StructuralError("obj: face with < 3 vertices on line " + std::to_string(line_no));
            for (std::size_t k = 1; k + 1 < face.size(); ++k) {
                mesh.triangles.push_back({face[0], face[k], face[k + 1]});
            }
        }
    }
    mesh.validate();
    return mesh;
}

TriangleMesh load_obj(const std::filesystem::path& path) { return parse_obj(read_text(path)); }

void save_obj(const TriangleMesh& mesh, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.precision(17);
    for (const auto& v : mesh.vertices) out << "v " << v.x << ' ' << v.y << ' ' << v.z << '\n';
    for (const auto& t : mesh.triangles) out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
}

TriangleMesh normalize_mesh(const TriangleMesh& mesh, double margin) {
    if (mesh.vertices.empty() || mesh.triangles.empty()) throw StructuralError("normalize_mesh: empty mesh");
    if (!(margin >= 0.0 && margin < 1.0)) throw ConfigError("normalize_mesh: margin must be in [0,1)");
    mesh.validate();
    Vec3 lo = mesh.vertices.front();
    Vec3 hi = lo;
    for (const auto& v : mesh.vertices) {
        lo = cwise_min(lo, v);
        hi = cwise_max(hi, v);
    }
    const Vec3 extent = hi - lo;
    const double longest = std::max(extent.x, std::max(extent.y, extent.z));
    if (!(longest > 0.0)) throw StructuralError("normalize_mesh: zero-extent mesh");
    const double scale = (2.0 - 2.0 * margin) / longest;
    const Vec3 center = (lo + hi) * 0.5;

    TriangleMesh out = mesh;
    for (auto& v : out.vertices) v = (v - center) * scale;
    out.normalized = true;
    return out;
}

Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
    // Voronoi-region walk (Ericson, Real-Time Collision Detection 5.1.5).
    const Vec3 ab = b - a;
    const Vec3 ac = c - a;
    const Vec3 ap = p - a;
    const double d1 = dot(ab, ap);
    const double d2 = dot(ac, ap);
    if (d1 <= 0.0 && d2 <= 0.0) return a;

    const Vec3 bp = p - b;
    const double d3 = dot(ab, bp);
    const double d4 = dot(ac, bp);
    if (d3 >= 0.0 && d4 <= d3) return b;

    const double vc = d1 * d4 - d3 * d2;
    if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
        const double v = d1 / (d1 - d3);
        return a + ab * v;
    }

    const Vec3 cp = p - c;
    const double d5 = dot(ab, cp);
    const double d6 = dot(ac, cp);
    if (d6 >= 0.0 && d5 <= d6) return c;

    const double vb = d5 * d2 - d1 * d6;
    if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
        const double w = d2 / (d2 - d6);
        return a + ac * w;
    }

    const double va = d3 * d6 - d5 * d4;
    if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
        const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }

    const double denom = va + vb + vc;
    if (denom == 0.0) {
        // Degenerate (collinear) triangle: fall back to the closest edge point.
        auto on_segment = [&](const Vec3& s0, const Vec3& s1) {
            const Vec3 e = s1 - s0;
            const double ee = dot(e, e);
            const double t = ee > 0.0 ? std::clamp(dot(p - s0, e) / ee, 0.0, 1.0) : 0.0;
            return s0 + e * t;
        };
        Vec3 best = on_segment(a, b);
        for (const Vec3& q : {on_segment(b, c), on_segment(c, a)}) {
            if (dot(q - p, q - p) < dot(best - p, best - p)) best = q;
        }
        return best;
    }
    const double v = vb / denom;
    const double w = vc / denom;
    return a + ab * v + ac * w;
}

SignedDistanceQueryResult mesh_unsigned_distance(const TriangleMesh& mesh, const Vec3& x) {
    if (mesh.triangles.empty()) throw StructuralError("mesh_unsigned_distance: empty mesh");
    double best = std::numeric_limits<double>::infinity();
    Vec3 nearest;
    for (const auto& t : mesh.triangles) {
        const Vec3 q = closest_point_on_triangle(x, mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]]);
        const Vec3 d = q - x;
        const double d2 = dot(d, d);
        if (d2 < best) {
            best = d2;
            nearest = q;
        }
    }
    return {std::sqrt(best), nearest};
}

const std::array<Vec3, 8>& stabbing_directions() {
    static const std::array<Vec3, 8> dirs = [] {
        std::array<Vec3, 8> out{};
        CounterRng rng(0x5ab5ab5aULL, 0);
        for (int i = 0; i < 8; ++i) {
            const Vec3 diag{(i & 1) ? -1.0 : 1.0, (i & 2) ? -1.0 : 1.0, (i & 4) ? -1.0 : 1.0};
            const Vec3 jitter{rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3)};
            out[static_cast<std::size_t>(i)] = normalize(diag + jitter);
        }
        return out;
    }();
    return dirs;
}

namespace {

enum class RayHit { miss, hit, ambiguous };

// Moller-Trumbore. Grazing hits (near an edge or vertex, or at the origin)
// are reported as ambiguous so the ray can abstain from the vote.
RayHit stab_triangle(const Vec3& origin, const Vec3& dir, const Vec3& a, const Vec3& b, const Vec3& c) {
    constexpr double kEdgeEps = 1e-9;
    const Vec3 e1 = b - a;
    const Vec3 e2 = c - a;
    const Vec3 n = cross(e1, e2);
    const double area2 = length(n);
    if (!(area2 > 1e-14)) return RayHit::miss;  // degenerate triangle
    const Vec3 pvec = cross(dir, e2);
    const double det = dot(e1, pvec);
    if (std::abs(det) < 1e-12 * area2) return RayHit::miss;  // parallel
    const double inv = 1.0 / det;
    const Vec3 tvec = origin - a;
    const double u = dot(tvec, pvec) * inv;
    if (u < -kEdgeEps || u > 1.0 + kEdgeEps) return RayHit::miss;
    const Vec3 qvec = cross(tvec, e1);
    const double v = dot(dir, qvec) * inv;
    if (v < -kEdgeEps || u + v > 1.0 + kEdgeEps) return RayHit::miss;
    const double t = dot(e2, qvec) * inv;
    if (t < -1e-12) return RayHit::miss;
    if (t <= 1e-12) return RayHit::ambiguous;
    if (u < kEdgeEps || v < kEdgeEps || u + v > 1.0 - kEdgeEps) return RayHit::ambiguous;
    return RayHit::hit;
}

}  // namespace

SignVote mesh_sign(const TriangleMesh& mesh, const Vec3& x) {
    SignVote vote;
    for (const Vec3& dir : stabbing_directions()) {
        int crossings = 0;
        bool ambiguous = false;
        for (const auto& t : mesh.triangles) {
            const RayHit h = stab_triangle(x, dir, mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]]);
            if (h == RayHit::ambiguous) {
                ambiguous = true;
                break;
            }
            if (h == RayHit::hit) ++crossings;
        }
        if (ambiguous) continue;
        if (crossings % 2 == 1) ++vote.inside_votes;
        else ++vote.outside_votes;
    }
    vote.ambiguous = vote.inside_votes + vote.outside_votes == 0;
    vote.sign = vote.inside_votes > vote.outside_votes ? -1 : 1;
    return vote;
}

MeshSdf::MeshSdf(TriangleMesh mesh) : mesh_(std::move(mesh)) {
    if (mesh_.triangles.empty()) throw StructuralError("MeshSdf: empty mesh");
    mesh_.validate();
}

double MeshSdf::distance(const Vec3& x) const {
    const double d = mesh_unsigned_distance(mesh_, x).distance;
    if (d == 0.0) return 0.0;
    return mesh_sign(mesh_, x).sign < 0 ? -d : d;
}

std::vector<Vec3> MeshSdf::sample_surface(std::size_t count, std::uint64_t seed) const {
    return sample_surface_mesh(mesh_, count, seed);
}

std::unique_ptr<DistanceOracle> load_oracle(const std::filesystem::path& path, double mesh_margin) {
    if (!std::filesystem::exists(path)) throw std::runtime_error("no such file: " + path.string());
    auto ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".obj") return std::make_unique<MeshSdf>(normalize_mesh(load_obj(path), mesh_margin));
    return std::make_unique<AnalyticSdf>(load_scene(path));
}

}  // namespace nglod
