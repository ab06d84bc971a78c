#pragma once

#include "sksim/engine.hpp"
#include "sksim/errors.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace sksim::io {

/// Shortest round-trip decimal form, so CSV output is a pure function of the data.
inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline constexpr const char* kEventsHeader = "replicate,time,kind,site,mass,particle,offspring,component";
inline constexpr const char* kSnapshotHeader = "replicate,time,type,position,mass,label";

/// One row per immigration and per branch event, in time order within a replicate.
/// Immigration rows carry the initial mass and the immigrant component; branch rows
/// carry the offspring count (0 = killed at the boundary).
inline void write_events_csv(std::ostream& os, std::size_t replicate, const DressedPath& path) {
    std::size_t a = 0, b = 0;
    const auto& im = path.immigrations;
    const auto& br = path.branches;
    while (a < im.size() || b < br.size()) {
        const bool take_im = b >= br.size() || (a < im.size() && im[a].time <= br[b].time);
        if (take_im) {
            const auto& e = im[a++];
            os << replicate << ',' << fmt(e.time) << ',' << to_string(e.kind) << ',' << fmt(e.site) << ','
               << fmt(e.initial_mass) << ',' << e.source_particle << ",," << e.component << '\n';
        } else {
            const auto& e = br[b++];
            os << replicate << ',' << fmt(e.time) << ",branch," << fmt(e.site) << ",," << e.particle << ','
               << e.offspring_count << ",\n";
        }
    }
}

/// Atoms of Lambda (type "mass", label = component) and skeleton particles
/// (type "skeleton", mass 1, label = particle id) at every output time.
inline void write_snapshot_csv(std::ostream& os, std::size_t replicate, const DressedPath& path) {
    for (const auto& s : path.states) {
        const auto& atoms = s.lambda.atoms();
        for (std::size_t k = 0; k < atoms.size(); ++k)
            os << replicate << ',' << fmt(s.time) << ",mass," << fmt(atoms[k].position) << ',' << fmt(atoms[k].mass)
               << ',' << s.component[k] << '\n';
        for (const auto& p : s.skeleton)
            os << replicate << ',' << fmt(s.time) << ",skeleton," << fmt(p.position) << ",1," << p.id << '\n';
    }
}

/// Binary event log: "SKSIM1", u16 version, u64 record count, u64 field count,
/// then records of five little-endian f64 values
/// (replicate, time, kind code, site, mass). Kind codes: 0 continuous,
/// 1 discontinuous, 2 branch-point, 3 branch (mass column = offspring count).
namespace binary {

inline constexpr std::array<char, 6> kMagic{'S', 'K', 'S', 'I', 'M', '1'};
inline constexpr std::uint16_t kVersion = 1;
inline constexpr std::uint64_t kFields = 5;

using Record = std::array<double, kFields>;

inline double kind_code(ImmigrationKind k) {
    switch (k) {
        case ImmigrationKind::continuous: return 0.0;
        case ImmigrationKind::discontinuous: return 1.0;
        case ImmigrationKind::branch_point: return 2.0;
    }
    return -1.0;
}

inline std::vector<Record> records(std::size_t replicate, const DressedPath& path) {
    std::vector<Record> out;
    const auto r = static_cast<double>(replicate);
    for (const auto& e : path.immigrations) out.push_back({r, e.time, kind_code(e.kind), e.site, e.initial_mass});
    for (const auto& e : path.branches) out.push_back({r, e.time, 3.0, e.site, static_cast<double>(e.offspring_count)});
    std::stable_sort(out.begin(), out.end(), [](const Record& a, const Record& b) { return a[1] < b[1]; });
    return out;
}

template <class T>
void put_le(std::ostream& os, T v) {
    static_assert(std::endian::native == std::endian::little, "big-endian hosts are not supported");
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    os.write(buf, sizeof(T));
}

template <class T>
T get_le(std::istream& is) {
    char buf[sizeof(T)];
    if (!is.read(buf, sizeof(T))) throw Error("truncated binary event file");
    T v;
    std::memcpy(&v, buf, sizeof(T));
    return v;
}

inline void write(std::ostream& os, std::span<const Record> recs) {
    os.write(kMagic.data(), kMagic.size());
    put_le<std::uint16_t>(os, kVersion);
    put_le<std::uint64_t>(os, recs.size());
    put_le<std::uint64_t>(os, kFields);
    for (const auto& r : recs)
        for (double v : r) put_le<double>(os, v);
}

inline std::vector<Record> read(std::istream& is) {
    std::array<char, 6> magic{};
    if (!is.read(magic.data(), magic.size()) || magic != kMagic) throw Error("not an SKSIM1 event file");
    if (get_le<std::uint16_t>(is) != kVersion) throw Error("unsupported SKSIM1 version");
    const auto n = get_le<std::uint64_t>(is);
    if (get_le<std::uint64_t>(is) != kFields) throw Error("unexpected SKSIM1 field count");
    std::vector<Record> out(n);
    for (auto& r : out)
        for (double& v : r) v = get_le<double>(is);
    return out;
}

}  // namespace binary

}  // namespace sksim::io
