#pragma once

#include <filesystem>
#include <iosfwd>

#include "imd/manifolds.hpp"

namespace imd {

/// Point-cloud CSV.
///
///     # imd-cloud intrinsic_dim=2 kind=sphere dim=2 radius=1
///     x1,x2,x3
///     0.12...,...
///
/// The optional first comment line carries the intrinsic dimension and the
/// manifold spec; the header is `x1,...,xn` followed by `lat1[,lat2]` when
/// latent coordinates are present. Values use 17 significant digits.
void write_cloud(std::ostream& out, const PointCloud& cloud);
PointCloud read_cloud(std::istream& in);

void save_cloud(const std::filesystem::path& path, const PointCloud& cloud);
PointCloud load_cloud(const std::filesystem::path& path);

}  // namespace imd
