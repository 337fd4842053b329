#pragma once

// Band-limited kernels built from their Fourier multipliers: the
// approximation of unity tau_j, Littlewood-Paley pieces psi_j, cone pieces
// psi_{n,j}, their antiderivatives theta_{n,j}, the mollifier kappa, and
// finite test dictionaries for the classes Phi_j^beta / Psi_j^beta.

#include <optional>
#include <string>
#include <vector>

#include "phasespace/grid.hpp"

namespace phasespace {

/// e^{-1/t} / (e^{-1/t} + e^{-1/(1-t)}), 0 for t <= 0 and 1 for t >= 1.
double smooth_step(double t);

/// 1 for |t| <= inner, 0 for |t| >= outer, smooth and monotone between.
struct BumpProfile {
  double inner = 1.0;
  double outer = 2.0;
  double operator()(double t) const;
};

double frequency_norm(int dim, const Frequency& xi);

/// tau_hat_j(xi) = profile(2^j |xi|), profile = BumpProfile{1, 2}.
Multiplier tau_hat(int dim, int j);
/// psi_hat_j = tau_hat_{j-1} - tau_hat_j.
Multiplier psi_hat(int dim, int j);
/// Cone partition chi_hat_n (n 0-based); sums to 1 on 1 <= |xi| <= 4.
Multiplier cone_hat(int dim, int n);
/// psi_hat_{n,j}(xi) = psi_hat_j(xi) chi_hat_n(2^j xi).
Multiplier psi_cone_hat(int dim, int n, int j);
/// theta_hat_{n,j} = psi_hat_{n,j} / (2 pi i xi_n)^{d+1}; throws InternalError
/// if a nonzero value sits where |2^j xi_n| < 1/sqrt(2d).
Multiplier theta_hat(int dim, int n, int j);
/// e^{-2 pi i a.xi} m(xi): the kernel translated by a.
Multiplier translated(Multiplier m, const Point& offset);
/// m(xi - eta): the kernel modulated by eta.
Multiplier modulated(Multiplier m, const Frequency& eta);

enum class KernelClass { Phi, Psi };

struct ClassTag {
  KernelClass cls = KernelClass::Phi;
  int level = 0;
  double exponent = 8.0;
};

std::string to_string(KernelClass cls);

struct Certificate {
  bool pass = true;
  /// min over the grid of the class bound divided by |k|.
  double lambda_max = 0.0;
  /// max |k_hat| outside the admissible frequency set, relative to max |k_hat|.
  double leak = 0.0;
  /// max |k| / bound; equals 1 / lambda_max.
  double bound_ratio = 0.0;
};

/// Roundoff floor for lambda_max: grid points with |k| below this fraction
/// of max |k| are ignored.
inline constexpr double kCertificateFloor = 1e-13;

/// With spectral_leak unset the leak is left at zero for the caller to fill
/// from the multiplier table.
Certificate class_membership(const SampledField& kernel, const ClassTag& tag, bool spectral_leak = true);
/// Leak of a multiplier table against the admissible set of `tag`.
double multiplier_leak(const TorusGrid& grid, const Multiplier& m, const ClassTag& tag);
double table_leak(const TorusGrid& grid, std::span<const Complex> table, const ClassTag& tag);

struct KernelHandle {
  std::string id;
  /// Unscaled multiplier; empty for kernels defined in space only (kappa).
  Multiplier multiplier;
  /// Applied normalisation factor.
  double scale = 1.0;
  /// 1 / lambda_max before normalisation: the empirical class constant.
  double class_constant = 1.0;
  std::optional<ClassTag> tag;
  Certificate certificate;
  /// Sampled kernel (already scaled); dropped by dictionaries after
  /// certification.
  std::optional<SampledField> field;

  /// kernel * f.
  SampledField apply(const SampledField& f) const;
  ComplexBuffer table(const TorusGrid& grid) const;
  SampledField materialize(const TorusGrid& grid) const;
};

/// Refuses levels whose band edge `radius` exceeds the grid Nyquist.
void require_band(const TorusGrid& grid, double radius, const std::string& what);

KernelHandle build_tau(const TorusGrid& grid, int j);
KernelHandle build_psi(const TorusGrid& grid, int j);
KernelHandle build_psi_cone(const TorusGrid& grid, int n, int j);
KernelHandle build_theta(const TorusGrid& grid, int n, int j);

/// kappa_scale: c exp(-16 / (1 - |x/r|^2)) with r = 2^{scale - exponent},
/// normalised so that h^d sum = 1. Refuses when r / h < min_samples.
inline constexpr int kNarrowKappaExponent = 9;
KernelHandle build_kappa(const TorusGrid& grid, int scale, int exponent = kNarrowKappaExponent,
                         double min_samples = 4.0);
double kappa_radius(int scale, int exponent);
/// (d/dx_axis)^order kappa_scale from the closed form, with the
/// normalisation of build_kappa. Exactly zero outside the radius.
KernelHandle build_kappa_derivative(const TorusGrid& grid, int scale, int axis, int order,
                                    int exponent = kNarrowKappaExponent, double min_samples = 4.0);

struct DictionarySpec {
  std::string id = "default";
  int tau_scales = 3;                       // tau_{j+1+s}, s < tau_scales
  int psi_scales = 3;                       // psi_{n,j+2+s}
  std::vector<double> modulations{0.25, 0.5};   // |eta| in units of 2^{-j}
  std::vector<double> translations{-1.0, 0.5, 1.0};  // offsets in units of 2^j
  bool keep_fields = false;

  void validate() const;
};

/// Candidates normalised by their own lambda_max. Throws ValidationError if
/// filtering leaves nothing.
struct Dictionary {
  ClassTag tag;
  std::vector<KernelHandle> members;
  std::size_t candidates = 0;
  std::size_t filtered = 0;
};

Dictionary build_dictionary(const TorusGrid& grid, const ClassTag& tag, const DictionarySpec& spec);

}  // namespace phasespace
