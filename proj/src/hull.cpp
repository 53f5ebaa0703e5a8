#include "riskplan/hull.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace riskplan {

namespace {

using P2 = std::array<double, 2>;
using P3 = std::array<double, 3>;

double cross2(const P2& o, const P2& a, const P2& b) {
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
}

P3 sub(const P3& a, const P3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
P3 cross3(const P3& a, const P3& b) {
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
double dot3(const P3& a, const P3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
double norm3(const P3& a) { return std::sqrt(dot3(a, a)); }

} // namespace

std::vector<int> convex_hull_2d(const std::vector<P2>& pts) {
    const int n = static_cast<int>(pts.size());
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) {
        if (pts[a][0] != pts[b][0]) return pts[a][0] < pts[b][0];
        if (pts[a][1] != pts[b][1]) return pts[a][1] < pts[b][1];
        return a < b;
    });
    idx.erase(std::unique(idx.begin(), idx.end(),
                          [&](int a, int b) { return pts[a] == pts[b]; }),
              idx.end());
    const int m = static_cast<int>(idx.size());
    if (m <= 2) return idx;

    std::vector<int> hull(2 * m);
    int k = 0;
    for (int i = 0; i < m; ++i) { // lower chain
        while (k >= 2 && cross2(pts[hull[k - 2]], pts[hull[k - 1]], pts[idx[i]]) <= 0) --k;
        hull[k++] = idx[i];
    }
    for (int i = m - 2, t = k + 1; i >= 0; --i) { // upper chain
        while (k >= t && cross2(pts[hull[k - 2]], pts[hull[k - 1]], pts[idx[i]]) <= 0) --k;
        hull[k++] = idx[i];
    }
    hull.resize(k - 1);
    return hull;
}

double hull_2d_signed_distance(const std::vector<P2>& pts, const std::vector<int>& hull,
                               const P2& q) {
    const int h = static_cast<int>(hull.size());
    if (h == 0) return std::numeric_limits<double>::infinity();
    if (h == 1) {
        const P2& p = pts[hull[0]];
        return std::hypot(q[0] - p[0], q[1] - p[1]);
    }
    double worst = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < h; ++i) {
        const P2 &a = pts[hull[i]], &b = pts[hull[(i + 1) % h]];
        const double ex = b[0] - a[0], ey = b[1] - a[1];
        const double len = std::hypot(ex, ey);
        if (len == 0) continue;
        // outward normal of a CCW edge points right of the edge direction
        const double d = ((q[0] - a[0]) * ey - (q[1] - a[1]) * ex) / len;
        worst = std::max(worst, d);
    }
    return worst;
}

Hull3D convex_hull_3d(const std::vector<P3>& pts) {
    const int n = static_cast<int>(pts.size());
    Hull3D out;
    if (n == 0) return out;

    double span = 0;
    for (int d = 0; d < 3; ++d) {
        double lo = pts[0][d], hi = pts[0][d];
        for (const P3& p : pts) {
            lo = std::min(lo, p[d]);
            hi = std::max(hi, p[d]);
        }
        span = std::max(span, hi - lo);
    }
    const double eps = std::max(span, 1.0) * 1e-10;

    // initial simplex: spread pair, then max-area, then max-volume point
    int i0 = 0, i1 = 0;
    double best = -1;
    for (int a = 1; a < n; ++a) {
        const double d = norm3(sub(pts[a], pts[0]));
        if (d > best) {
            best = d;
            i1 = a;
        }
    }
    if (best <= eps) { // all points coincide
        out.vertices = {0};
        return out;
    }
    int i2 = -1;
    best = eps;
    for (int a = 0; a < n; ++a) {
        const double d = norm3(cross3(sub(pts[i1], pts[i0]), sub(pts[a], pts[i0])));
        if (d > best) {
            best = d;
            i2 = a;
        }
    }
    if (i2 < 0) { // collinear: endpoints only
        out.vertices = {i0, i1};
        return out;
    }
    P3 nrm = cross3(sub(pts[i1], pts[i0]), sub(pts[i2], pts[i0]));
    int i3 = -1;
    best = eps * norm3(nrm);
    for (int a = 0; a < n; ++a) {
        const double d = std::abs(dot3(nrm, sub(pts[a], pts[i0])));
        if (d > best) {
            best = d;
            i3 = a;
        }
    }
    if (i3 < 0) { // coplanar: project to the dominant plane and run the 2D hull
        const P3 an{std::abs(nrm[0]), std::abs(nrm[1]), std::abs(nrm[2])};
        int drop = an[0] > an[1] ? (an[0] > an[2] ? 0 : 2) : (an[1] > an[2] ? 1 : 2);
        std::vector<P2> proj(n);
        for (int a = 0; a < n; ++a) {
            int u = (drop + 1) % 3, v = (drop + 2) % 3;
            proj[a] = {pts[a][u], pts[a][v]};
        }
        out.vertices = convex_hull_2d(proj);
        return out;
    }

    struct Face {
        int a, b, c;
        P3 n;
        double off;
        bool alive = true;
    };
    std::vector<Face> faces;
    auto add_face = [&](int a, int b, int c, const P3& inside) {
        Face f{a, b, c, cross3(sub(pts[b], pts[a]), sub(pts[c], pts[a])), 0, true};
        if (dot3(f.n, sub(inside, pts[a])) > 0) { // flip outward
            std::swap(f.b, f.c);
            f.n = {-f.n[0], -f.n[1], -f.n[2]};
        }
        f.off = dot3(f.n, pts[f.a]);
        faces.push_back(f);
    };
    const P3 centroid{(pts[i0][0] + pts[i1][0] + pts[i2][0] + pts[i3][0]) / 4,
                      (pts[i0][1] + pts[i1][1] + pts[i2][1] + pts[i3][1]) / 4,
                      (pts[i0][2] + pts[i1][2] + pts[i2][2] + pts[i3][2]) / 4};
    add_face(i0, i1, i2, centroid);
    add_face(i0, i1, i3, centroid);
    add_face(i0, i2, i3, centroid);
    add_face(i1, i2, i3, centroid);

    for (int p = 0; p < n; ++p) {
        if (p == i0 || p == i1 || p == i2 || p == i3) continue;
        // visible faces
        std::vector<int> visible;
        for (int f = 0; f < static_cast<int>(faces.size()); ++f) {
            if (!faces[f].alive) continue;
            const double d = dot3(faces[f].n, pts[p]) - faces[f].off;
            if (d > eps * norm3(faces[f].n)) visible.push_back(f);
        }
        if (visible.empty()) continue;
        // horizon = edges of visible faces shared with a hidden face
        std::vector<std::array<int, 2>> horizon;
        auto edge_hidden = [&](int u, int v) {
            for (int f : visible) {
                const Face& fc = faces[f];
                const int e[3][2] = {{fc.a, fc.b}, {fc.b, fc.c}, {fc.c, fc.a}};
                for (auto& pr : e)
                    if (pr[0] == v && pr[1] == u) return false; // shared with visible
            }
            return true;
        };
        for (int f : visible) {
            const Face& fc = faces[f];
            const int e[3][2] = {{fc.a, fc.b}, {fc.b, fc.c}, {fc.c, fc.a}};
            for (auto& pr : e)
                if (edge_hidden(pr[0], pr[1])) horizon.push_back({pr[0], pr[1]});
        }
        for (int f : visible) faces[f].alive = false;
        for (auto& e : horizon) add_face(e[0], e[1], p, centroid);
    }

    std::vector<int> mark;
    for (const Face& f : faces)
        if (f.alive) {
            out.faces.push_back({f.a, f.b, f.c});
            mark.push_back(f.a);
            mark.push_back(f.b);
            mark.push_back(f.c);
        }
    std::sort(mark.begin(), mark.end());
    mark.erase(std::unique(mark.begin(), mark.end()), mark.end());
    out.vertices = mark;
    return out;
}

double hull_3d_max_violation(const std::vector<P3>& pts, const Hull3D& hull, const P3& q) {
    double worst = -std::numeric_limits<double>::infinity();
    for (const auto& f : hull.faces) {
        const P3 n = cross3(sub(pts[f[1]], pts[f[0]]), sub(pts[f[2]], pts[f[0]]));
        const double len = norm3(n);
        if (len == 0) continue;
        worst = std::max(worst, dot3(n, sub(q, pts[f[0]])) / len);
    }
    return worst;
}

} // namespace riskplan
