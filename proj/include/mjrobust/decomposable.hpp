#pragma once

#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#include "mjrobust/graph.hpp"
#include "mjrobust/loss.hpp"

namespace mjrobust {

inline Mat kron(const Mat& a, const Mat& b) {
    Mat k(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            k.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return k;
}

/// Decomposable jump system. Every system matrix splits into a decoupled
/// part (per agent), a coupled part entering through the stochastic
/// Laplacian, and a performance part entering through the nominal Laplacian:
///   A_sigma = I_N (x) Ad + L_sigma (x) Ac + L0 (x) Ap,
/// and analogously for B, C, D.
struct DecomposableSystem {
    Mat Ad, Ac, Ap;  // nx x nx
    Mat Bd, Bc, Bp;  // nx x nw
    Mat Cd, Cc, Cp;  // nz x nx
    Mat Dd, Dc, Dp;  // nz x nw
    int nx = 0, nw = 0, nz = 0;
};

inline void check_dims(const DecomposableSystem& s) {
    auto want = [](const Mat& m, int r, int c, const char* name) {
        if (m.rows() != r || m.cols() != c)
            throw std::invalid_argument(std::string("decomposable system: block ") +
                                        name + " has inconsistent dimensions");
    };
    want(s.Ad, s.nx, s.nx, "Ad"); want(s.Ac, s.nx, s.nx, "Ac"); want(s.Ap, s.nx, s.nx, "Ap");
    want(s.Bd, s.nx, s.nw, "Bd"); want(s.Bc, s.nx, s.nw, "Bc"); want(s.Bp, s.nx, s.nw, "Bp");
    want(s.Cd, s.nz, s.nx, "Cd"); want(s.Cc, s.nz, s.nx, "Cc"); want(s.Cp, s.nz, s.nx, "Cp");
    want(s.Dd, s.nz, s.nw, "Dd"); want(s.Dc, s.nz, s.nw, "Dc"); want(s.Dp, s.nz, s.nw, "Dp");
}

/// Dense system matrices of a single joint mode (oracle / simulator scale).
struct FullModeSystem {
    Mat A, B, C, D;
};

inline FullModeSystem assemble(const DecomposableSystem& s, const UndirectedGraph& g,
                               ModeIndex mode) {
    check_dims(s);
    const Mat eye = Mat::Identity(g.vertex_count, g.vertex_count);
    const Mat l0 = laplacian(g).cast<double>();
    const Mat lm = mode_laplacian(g, mode).cast<double>();
    FullModeSystem f;
    f.A = kron(eye, s.Ad) + kron(lm, s.Ac) + kron(l0, s.Ap);
    f.B = kron(eye, s.Bd) + kron(lm, s.Bc) + kron(l0, s.Bp);
    f.C = kron(eye, s.Cd) + kron(lm, s.Cc) + kron(l0, s.Cp);
    f.D = kron(eye, s.Dd) + kron(lm, s.Dc) + kron(l0, s.Dp);
    return f;
}

/// Mass-with-friction agents running the relative-output consensus protocol
/// u_i = w_i + kappa * sum_j theta_ij (y_j - y_i), with the deterministic
/// performance output z = L0 y.
inline DecomposableSystem consensus_example(double kappa) {
    if (kappa <= 0.0)
        throw std::invalid_argument("consensus_example: kappa must be positive");
    DecomposableSystem s;
    s.nx = 2; s.nw = 1; s.nz = 1;
    s.Ad = Mat{{1.0, 1.0}, {0.0, 0.1}};
    s.Ac = Mat{{0.0, 0.0}, {-kappa, 0.0}};  // -kappa * B_agent * C_agent
    s.Ap = Mat::Zero(2, 2);
    s.Bd = Mat{{0.0}, {1.0}};
    s.Bc = Mat::Zero(2, 1);
    s.Bp = Mat::Zero(2, 1);
    s.Cd = Mat::Zero(1, 2);
    s.Cc = Mat::Zero(1, 2);
    s.Cp = Mat{{1.0, 0.0}};
    s.Dd = Mat::Zero(1, 1);
    s.Dc = Mat::Zero(1, 1);
    s.Dp = Mat::Zero(1, 1);
    return s;
}

// ---------------------------------------------------------------------------
// Serialization: "dims nx nw nz" followed by labelled row-major matrix
// blocks. Omitted blocks are zero.
// ---------------------------------------------------------------------------

inline void write_system(std::ostream& os, const DecomposableSystem& s) {
    check_dims(s);
    os << "dims " << s.nx << ' ' << s.nw << ' ' << s.nz << '\n';
    auto block = [&os](const char* name, const Mat& m) {
        if (m.isZero(0.0)) return;
        os << name << '\n';
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            for (Eigen::Index j = 0; j < m.cols(); ++j)
                os << m(i, j) << (j + 1 < m.cols() ? " " : "");
            os << '\n';
        }
    };
    block("Ad", s.Ad); block("Ac", s.Ac); block("Ap", s.Ap);
    block("Bd", s.Bd); block("Bc", s.Bc); block("Bp", s.Bp);
    block("Cd", s.Cd); block("Cc", s.Cc); block("Cp", s.Cp);
    block("Dd", s.Dd); block("Dc", s.Dc); block("Dp", s.Dp);
}

inline DecomposableSystem read_system(std::istream& is) {
    std::string key;
    if (!(is >> key) || key != "dims")
        throw std::runtime_error("system: expected 'dims nx nw nz'");
    DecomposableSystem s;
    if (!(is >> s.nx >> s.nw >> s.nz) || s.nx <= 0 || s.nw <= 0 || s.nz <= 0)
        throw std::runtime_error("system: bad dimensions");
    std::map<std::string, Mat*> blocks{
        {"Ad", &s.Ad}, {"Ac", &s.Ac}, {"Ap", &s.Ap}, {"Bd", &s.Bd},
        {"Bc", &s.Bc}, {"Bp", &s.Bp}, {"Cd", &s.Cd}, {"Cc", &s.Cc},
        {"Cp", &s.Cp}, {"Dd", &s.Dd}, {"Dc", &s.Dc}, {"Dp", &s.Dp}};
    auto dims_of = [&](const std::string& name) -> std::pair<int, int> {
        const int rows = name[0] == 'A' || name[0] == 'B' ? s.nx : s.nz;
        const int cols = name[0] == 'A' || name[0] == 'C' ? s.nx : s.nw;
        return {rows, cols};
    };
    for (auto& [name, mat] : blocks) {
        auto [r, c] = dims_of(name);
        *mat = Mat::Zero(r, c);
    }
    std::string name;
    while (is >> name) {
        auto it = blocks.find(name);
        if (it == blocks.end())
            throw std::runtime_error("system: unknown block '" + name + "'");
        auto [r, c] = dims_of(name);
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j)
                if (!(is >> (*it->second)(i, j)))
                    throw std::runtime_error("system: truncated block '" + name + "'");
    }
    check_dims(s);
    return s;
}

inline std::string to_system_string(const DecomposableSystem& s) {
    std::ostringstream os;
    os.precision(17);
    write_system(os, s);
    return os.str();
}

inline DecomposableSystem system_from_string(const std::string& str) {
    std::istringstream is(str);
    return read_system(is);
}

}  // namespace mjrobust
