#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fpulab/errors.hpp"
#include "fpulab/lattice.hpp"
#include "fpulab/profiles.hpp"
#include "fpulab/util.hpp"

namespace fpulab {

using json = nlohmann::json;

// all floating output carries 17 significant digits so files round-trip
inline std::string fmt17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

class CsvWriter {
  public:
    CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& columns)
        : out_(path) {
        if (!out_) throw Error("CsvWriter: cannot open " + path.string());
        for (std::size_t i = 0; i < columns.size(); ++i)
            out_ << (i ? "," : "") << columns[i];
        out_ << "\n";
    }
    void row(const std::vector<double>& values) {
        for (std::size_t i = 0; i < values.size(); ++i)
            out_ << (i ? "," : "") << fmt17(values[i]);
        out_ << "\n";
    }
    void row_raw(const std::vector<std::string>& values) {
        for (std::size_t i = 0; i < values.size(); ++i)
            out_ << (i ? "," : "") << values[i];
        out_ << "\n";
    }

  private:
    std::ofstream out_;
};

inline void write_json(const std::filesystem::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw Error("write_json: cannot open " + path.string());
    out << j.dump(2) << "\n";
}

inline json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("read_json: cannot open " + path.string());
    json j;
    in >> j;
    return j;
}

inline std::string run_id_from(const std::string& canonical_config) {
    std::uint64_t h = fnv1a(canonical_config.data(), canonical_config.size());
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// Profiles serialize as a JSON header plus a CSV of (x_j, phi_j).
inline void save_profile(const SolitaryWave& w, const std::filesystem::path& basepath) {
    json hdr;
    hdr["eps"] = w.eps;
    hdr["beta"] = w.beta;
    hdr["c"] = w.c;
    hdr["kappa"] = w.kappa_fpu;
    hdr["L"] = w.grid->L();
    hdr["M"] = w.grid->M();
    hdr["residual"] = w.residual;
    write_json(basepath.string() + ".json", hdr);
    CsvWriter csv(basepath.string() + ".csv", {"x", "phi"});
    for (int j = 0; j < w.grid->M(); ++j) csv.row({w.grid->node(j), w.phi[j]});
}

// Loader re-verifies the fixed-point residual of the stored samples.
inline SolitaryWave load_profile(const PotentialSpec& V, const std::filesystem::path& basepath,
                                 double accept_residual = 1e-12) {
    json hdr = read_json(basepath.string() + ".json");
    SolitaryWave w;
    w.eps = hdr.at("eps").get<double>();
    w.beta = hdr.at("beta").get<double>();
    w.c = hdr.at("c").get<double>();
    w.kappa_fpu = hdr.at("kappa").get<double>();
    w.grid = std::make_shared<SpectralGrid>(hdr.at("L").get<double>(), hdr.at("M").get<int>());
    std::ifstream in(basepath.string() + ".csv");
    if (!in) throw Error("load_profile: cannot open csv");
    std::string line;
    std::getline(in, line); // header
    while (std::getline(in, line)) {
        auto comma = line.find(',');
        if (comma == std::string::npos) continue;
        w.phi.push_back(std::stod(line.substr(comma + 1)));
    }
    if (static_cast<int>(w.phi.size()) != w.grid->M())
        throw Error("load_profile: sample count mismatch");
    w.phi_hat = w.grid->to_spectrum(w.phi);
    w.residual = fixed_point_residual(V, w);
    if (w.residual > accept_residual)
        throw ConsistencyViolation("load_profile: re-verified residual " + fmt17(w.residual));
    return w;
}

} // namespace fpulab
