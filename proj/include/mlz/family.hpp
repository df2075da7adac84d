#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mlz/operators.hpp"

namespace mlz {

// A point in parameter space; its length always equals the family's slot
// count (one parameter slot per generator).
using ParamPoint = Eigen::VectorXd;

// A commuting multi-parameter Hamiltonian family: n_slots() generators
// H_0..H_{n-1} over as many parameter slots, expected (and verified, never
// assumed) to satisfy the flatness conditions
//   [H_j, H_k] = 0   and   dH_j/dx_k - dH_k/dx_j = 0.
class HamiltonianFamily {
  public:
    virtual ~HamiltonianFamily() = default;

    virtual int dim() const = 0;
    virtual int n_slots() const = 0;

    // The j-th generator evaluated at x.
    virtual HermitianOperator generator(int j, const ParamPoint& x) const = 0;

    // dH_j/dx_k when analytic derivatives are available.
    virtual bool has_analytic_partials() const { return false; }
    virtual Matrix partial(int j, int k, const ParamPoint& x) const;

    // True when every generator is real symmetric for all valid x; the
    // commutation and curl residuals are then individually meaningful parts
    // of the flatness condition, and real-arithmetic fast paths apply.
    virtual bool real_valued() const = 0;

    // Basis indices this family cannot vouch for (e.g. the top boson
    // occupation block of a truncated space). Verification norms exclude
    // these rows and columns; empty means the whole space is reliable.
    virtual std::vector<int> unreliable_indices() const { return {}; }

  protected:
    void require_point(const ParamPoint& x) const;
    void require_slot(int j) const;
};

// Generic family defined by callables; used for ad-hoc and deliberately
// broken families in tests and for wrapping restrictions.
class FunctionFamily : public HamiltonianFamily {
  public:
    using Evaluator = std::function<Matrix(int j, const ParamPoint&)>;
    using Partial = std::function<Matrix(int j, int k, const ParamPoint&)>;

    FunctionFamily(int dim, int n_slots, Evaluator eval, Partial partial = nullptr,
                   bool real = true, std::vector<int> unreliable = {});

    int dim() const override { return dim_; }
    int n_slots() const override { return slots_; }
    HermitianOperator generator(int j, const ParamPoint& x) const override;
    bool has_analytic_partials() const override { return static_cast<bool>(partial_); }
    Matrix partial(int j, int k, const ParamPoint& x) const override;
    bool real_valued() const override { return real_; }
    std::vector<int> unreliable_indices() const override { return unreliable_; }

  private:
    int dim_;
    int slots_;
    Evaluator eval_;
    Partial partial_;
    bool real_;
    std::vector<int> unreliable_;
};

enum class DerivativeMode { Analytic, Central };

const char* to_string(DerivativeMode mode);

// Central differences use step fd_step_scale * max(1, |x_k|) per slot.
struct VerifyOptions {
    DerivativeMode mode = DerivativeMode::Analytic;
    double fd_step_scale = 1e-4;
    int threads = 0;  // <=0: hardware concurrency (still capped by env)
};

// dH_j/dx_k by the requested route.
Matrix family_partial(const HamiltonianFamily& family, int j, int k, const ParamPoint& x,
                      const VerifyOptions& opts = {});

// ||[H_j, H_k]||_F with unreliable rows/columns excluded.
double check_commutation(const HamiltonianFamily& family, const ParamPoint& x, int j, int k);

// ||dH_j/dx_k - dH_k/dx_j||_F, same exclusion.
double check_curl(const HamiltonianFamily& family, const ParamPoint& x, int j, int k,
                  const VerifyOptions& opts = {});

// The full flatness residual || dH_k/dx_j - dH_j/dx_k - i [H_k, H_j] ||_F
// together with its two split norms. For real-valued families the derivative
// part is purely real and the commutator part purely imaginary, so
// full^2 = curl^2 + commutator^2.
struct CurvatureResidual {
    double commutator_norm = 0.0;
    double curl_norm = 0.0;
    double full_norm = 0.0;
};

CurvatureResidual curvature_residual(const HamiltonianFamily& family, const ParamPoint& x,
                                     int j, int k, const VerifyOptions& opts = {});

// Rectangular grid over parameter space.
struct ParamGrid {
    ParamPoint mins;
    ParamPoint maxs;
    std::vector<int> counts;  // per slot, >= 1

    std::vector<ParamPoint> points() const;
};

struct ScanRow {
    ParamPoint x;
    int j = 0;
    int k = 0;
    CurvatureResidual residual;
};

struct FamilyScanReport {
    std::vector<ScanRow> rows;
    DerivativeMode mode = DerivativeMode::Analytic;
    double worst_commutator = 0.0;
    double worst_curl = 0.0;
    double worst_full = 0.0;
    int worst_row = -1;  // index into rows of the largest full norm

    bool passes(double threshold) const { return worst_full <= threshold; }
};

// Evaluate all generator pairs on every point; points are processed in
// parallel but the report order is deterministic.
FamilyScanReport scan_family(const HamiltonianFamily& family,
                             const std::vector<ParamPoint>& points,
                             const VerifyOptions& opts = {});

// View of a family on a subspace spanned by a subset of basis vectors.
// Every evaluation verifies that the subspace is actually invariant
// (off-block norm against numerical zero) before handing out the block.
std::shared_ptr<HamiltonianFamily> restrict_family(
    std::shared_ptr<const HamiltonianFamily> family, std::vector<int> indices);

}  // namespace mlz
