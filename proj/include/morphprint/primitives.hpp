#pragma once

#include "morphprint/mesh.hpp"

namespace morphprint::primitives {

/// Axis-aligned box with each face split into `subdivisions`^2 quads.
Mesh box(const Vec3& min, const Vec3& max, int subdivisions = 1);

/// Icosahedron refined `level` times (20 * 4^level faces), projected onto a sphere.
Mesh icosphere(double radius, int level, const Vec3& center = Vec3::Zero());

/// Square prism with a square through-hole, both centered on the z axis.
Mesh square_frame(double outer_side, double inner_side, double height, const Vec3& base_center = Vec3::Zero());

/// Closed tube with a regular polygonal cross-section, running from `start`
/// along +y for `length`. `rings` cross-sections (>= 2) are evenly spaced;
/// both ends are capped by a fan around a center vertex. The tip center
/// vertex is the last vertex.
Mesh tube_y(const Vec3& start, double length, double radius, int sides, int rings);

} // namespace morphprint::primitives
