#include "nrroom/fields.hpp"

#include <cstdio>
#include <cstring>

namespace nrroom {

Aabb Field::domain() const {
  if (const GridField* g = grid()) return g->bbox;
  const AnalyticField& a = *analytic();
  switch (a.kind) {
    case AnalyticField::Kind::Sphere:
      return {a.center - Vec3{a.radius, a.radius, a.radius},
              a.center + Vec3{a.radius, a.radius, a.radius}};
    case AnalyticField::Kind::Box:
      return {a.center - a.half_extents, a.center + a.half_extents};
    case AnalyticField::Kind::RoomShell:
    default:
      // walls have no outer bound; expose the inner box padded a little
      return {a.center - a.half_extents - Vec3{0.5, 0.5, 0.5},
              a.center + a.half_extents + Vec3{0.5, 0.5, 0.5}};
  }
}

GridField bake_grid(const AnalyticField& a, int nx, int ny, int nz, const Aabb& bbox,
                    const AlbedoFn& albedo_fn) {
  if (nx < 2 || ny < 2 || nz < 2) throw ValidationError("grid dims must be >= 2");
  if (!(bbox.min.x < bbox.max.x && bbox.min.y < bbox.max.y && bbox.min.z < bbox.max.z))
    throw ValidationError("bbox.min must be < bbox.max componentwise");
  GridField g;
  g.nx = nx;
  g.ny = ny;
  g.nz = nz;
  g.bbox = bbox;
  g.sdf.resize(static_cast<std::size_t>(nx) * ny * nz);
  if (albedo_fn) g.albedo.resize(g.sdf.size() * 3);
  for (int k = 0; k < nz; ++k) {
    for (int j = 0; j < ny; ++j) {
      for (int i = 0; i < nx; ++i) {
        Vec3 p = g.node_pos(i, j, k);
        std::size_t n = g.node_index(i, j, k);
        g.sdf[n] = static_cast<float>(sdf_eval(a, p));
        if (albedo_fn) {
          Vec3 c = albedo_fn(p);
          g.albedo[3 * n + 0] = static_cast<float>(std::clamp(c.x, 0.0, 1.0));
          g.albedo[3 * n + 1] = static_cast<float>(std::clamp(c.y, 0.0, 1.0));
          g.albedo[3 * n + 2] = static_cast<float>(std::clamp(c.z, 0.0, 1.0));
        }
      }
    }
  }
  g.finalize();
  return g;
}

namespace {

Aabb negative_node_box(const GridField& g, bool pad) {
  bool any = false;
  int lo[3] = {g.nx, g.ny, g.nz};
  int hi[3] = {-1, -1, -1};
  for (int k = 0; k < g.nz; ++k)
    for (int j = 0; j < g.ny; ++j)
      for (int i = 0; i < g.nx; ++i)
        if (g.sdf[g.node_index(i, j, k)] < 0.0f) {
          any = true;
          lo[0] = std::min(lo[0], i);
          lo[1] = std::min(lo[1], j);
          lo[2] = std::min(lo[2], k);
          hi[0] = std::max(hi[0], i);
          hi[1] = std::max(hi[1], j);
          hi[2] = std::max(hi[2], k);
        }
  if (!any) throw EmptyField();
  int p = pad ? 1 : 0;
  Aabb out;
  out.min = g.node_pos(std::max(lo[0] - p, 0), std::max(lo[1] - p, 0), std::max(lo[2] - p, 0));
  out.max = g.node_pos(std::min(hi[0] + p, g.nx - 1), std::min(hi[1] + p, g.ny - 1),
                       std::min(hi[2] + p, g.nz - 1));
  return out;
}

void put_u32(std::FILE* f, uint32_t v) { std::fwrite(&v, 4, 1, f); }
void put_f32(std::FILE* f, float v) { std::fwrite(&v, 4, 1, f); }

uint32_t get_u32(std::FILE* f) {
  uint32_t v = 0;
  if (std::fread(&v, 4, 1, f) != 1) throw FormatError("truncated SDFG file");
  return v;
}
float get_f32(std::FILE* f) {
  float v = 0;
  if (std::fread(&v, 4, 1, f) != 1) throw FormatError("truncated SDFG file");
  return v;
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

Aabb extract_bbox(const GridField& g) { return negative_node_box(g, true); }
Aabb extract_bbox_tight(const GridField& g) { return negative_node_box(g, false); }

void GridField::finalize() {
  try {
    neg_bbox = negative_node_box(*this, true);
    has_negative = true;
  } catch (const EmptyField&) {
    has_negative = false;
  }
}

GridField read_sdfg(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw ValidationError("cannot open " + path);
  char magic[4];
  if (std::fread(magic, 1, 4, f.get()) != 4 || std::memcmp(magic, "SDFG", 4) != 0)
    throw FormatError("bad magic in " + path);
  uint32_t version = get_u32(f.get());
  if (version != 1) throw FormatError("unsupported SDFG version in " + path);
  GridField g;
  g.nx = static_cast<int>(get_u32(f.get()));
  g.ny = static_cast<int>(get_u32(f.get()));
  g.nz = static_cast<int>(get_u32(f.get()));
  if (g.nx < 2 || g.ny < 2 || g.nz < 2 || static_cast<long long>(g.nx) * g.ny * g.nz > (1ll << 31))
    throw FormatError("bad dims in " + path);
  g.bbox.min = {get_f32(f.get()), get_f32(f.get()), get_f32(f.get())};
  g.bbox.max = {get_f32(f.get()), get_f32(f.get()), get_f32(f.get())};
  if (!(g.bbox.min.x < g.bbox.max.x && g.bbox.min.y < g.bbox.max.y && g.bbox.min.z < g.bbox.max.z))
    throw FormatError("bad bbox in " + path);
  uint32_t flags = get_u32(f.get());
  std::size_t n = static_cast<std::size_t>(g.nx) * g.ny * g.nz;
  g.sdf.resize(n);
  if (std::fread(g.sdf.data(), 4, n, f.get()) != n) throw FormatError("truncated SDFG data");
  if (flags & 1u) {
    g.albedo.resize(3 * n);
    if (std::fread(g.albedo.data(), 4, 3 * n, f.get()) != 3 * n)
      throw FormatError("truncated SDFG albedo");
  }
  for (float v : g.sdf)
    if (!std::isfinite(v)) throw FormatError("non-finite SDF value in " + path);
  g.finalize();
  return g;
}

void write_sdfg(const std::string& path, const GridField& g) {
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw ValidationError("cannot write " + path);
  std::fwrite("SDFG", 1, 4, f.get());
  put_u32(f.get(), 1);
  put_u32(f.get(), static_cast<uint32_t>(g.nx));
  put_u32(f.get(), static_cast<uint32_t>(g.ny));
  put_u32(f.get(), static_cast<uint32_t>(g.nz));
  put_f32(f.get(), static_cast<float>(g.bbox.min.x));
  put_f32(f.get(), static_cast<float>(g.bbox.min.y));
  put_f32(f.get(), static_cast<float>(g.bbox.min.z));
  put_f32(f.get(), static_cast<float>(g.bbox.max.x));
  put_f32(f.get(), static_cast<float>(g.bbox.max.y));
  put_f32(f.get(), static_cast<float>(g.bbox.max.z));
  put_u32(f.get(), g.has_albedo() ? 1u : 0u);
  std::fwrite(g.sdf.data(), 4, g.sdf.size(), f.get());
  if (g.has_albedo()) std::fwrite(g.albedo.data(), 4, g.albedo.size(), f.get());
}

}  // namespace nrroom
