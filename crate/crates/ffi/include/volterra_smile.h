#ifndef VOLTERRA_SMILE_H
#define VOLTERRA_SMILE_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum VsKernelFamily {
  VS_KERNEL_FAMILY_FBM = 0,
  VS_KERNEL_FAMILY_RL = 1,
  VS_KERNEL_FAMILY_FOU = 2,
  VS_KERNEL_FAMILY_LOG_FBM = 3,
} VsKernelFamily;

typedef enum VsOptionKind {
  VS_OPTION_KIND_CALL = 0,
  VS_OPTION_KIND_PUT = 1,
} VsOptionKind;

typedef enum VsStatus {
  VS_STATUS_OK = 0,
  VS_STATUS_NULL_POINTER = 1,
  VS_STATUS_DOMAIN = 2,
  VS_STATUS_FACTORIZATION = 3,
  VS_STATUS_LENGTH_MISMATCH = 4,
  VS_STATUS_NO_ARBITRAGE = 5,
  VS_STATUS_BRACKET = 6,
  VS_STATUS_DEGENERATE_DENOMINATOR = 7,
  VS_STATUS_CONFIG = 8,
  VS_STATUS_IO = 9,
  VS_STATUS_PANIC = 10,
} VsStatus;

/**
 * Kernel handle.
 */
typedef struct VsKernel VsKernel;

/**
 * Model parameters handle (exponential volatility map).
 */
typedef struct VsModel VsModel;

/**
 * Joint Gaussian sampler handle for `(V, B)` on a uniform grid.
 */
typedef struct VsSampler VsSampler;

/**
 * Moderate-deviation coefficients and the kernel inner products behind them.
 */
typedef struct VsMdCoefficients {
  double k1_mean;
  double a;
  double b;
  double c;
  double j2;
  double j3;
  double j4;
  double sigma0;
  double sigma1;
  double sigma2_half;
} VsMdCoefficients;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *vs_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *vs_version(void);

/**
 * Creates a kernel. Unused parameters are ignored: `a` for FOU, `c` for RL
 * and LOGFBM, `p` for LOGFBM.
 */
enum VsStatus vs_kernel_new(enum VsKernelFamily family,
                            double hurst,
                            double a,
                            double c,
                            double p,
                            size_t quad_n,
                            struct VsKernel **out);

void vs_kernel_free(struct VsKernel *kernel);

enum VsStatus vs_kernel_family(const struct VsKernel *kernel, enum VsKernelFamily *out);

/**
 * `K(t, s)` for `0 <= s < t <= 1`.
 */
enum VsStatus vs_kernel_eval(const struct VsKernel *kernel, double t, double s, double *out);

/**
 * `∫_0^{min(t,s)} K(t,u) K(s,u) du`.
 */
enum VsStatus vs_kernel_covariance(const struct VsKernel *kernel,
                                   double t,
                                   double s,
                                   size_t quad_n,
                                   double *out);

enum VsStatus vs_speed_gamma(const struct VsKernel *kernel, double eps, double *out);

enum VsStatus vs_model_new(double rho, double sigma0, double eta, struct VsModel **out);

void vs_model_free(struct VsModel *model);

enum VsStatus vs_bs_price(double t, double k, double sigma, enum VsOptionKind kind, double *out);

enum VsStatus vs_implied_vol(double price, double t, double k, enum VsOptionKind kind, double *out);

/**
 * Monte Carlo price of a European option at maturity `t` and log-strike `k`.
 */
enum VsStatus vs_mc_option_price(const struct VsKernel *kernel,
                                 const struct VsModel *model,
                                 size_t paths,
                                 size_t steps,
                                 uint64_t seed,
                                 bool antithetic,
                                 double t,
                                 double k,
                                 enum VsOptionKind kind,
                                 double *out_price,
                                 double *out_stderr);

/**
 * Rate function `J(x)` of the limit kernel of `kernel`, Ritz method with
 * `basis_n` Fourier modes.
 */
enum VsStatus vs_rate_function(const struct VsModel *model,
                               const struct VsKernel *kernel,
                               double x,
                               size_t basis_n,
                               size_t quad_n,
                               double *out_j,
                               bool *out_converged);

/**
 * Short-time implied volatility `|x| / sqrt(2 J(x))`, `x != 0`.
 */
enum VsStatus vs_asymptotic_smile(const struct VsModel *model,
                                  const struct VsKernel *kernel,
                                  double x,
                                  double *out);

enum VsStatus vs_md_coefficients(const struct VsModel *model,
                                 double hurst,
                                 size_t quad_n,
                                 struct VsMdCoefficients *out);

/**
 * Sampler for `(V_{t_k}, B_{t_k})`, `t_k = k t / steps`, `k = 1..steps`.
 */
enum VsStatus vs_sampler_new(const struct VsKernel *kernel,
                             double maturity,
                             size_t steps,
                             size_t quad_n,
                             struct VsSampler **out);

void vs_sampler_free(struct VsSampler *sampler);

/**
 * Number of time steps of the sampler grid.
 */
enum VsStatus vs_sampler_steps(const struct VsSampler *sampler, size_t *out);

/**
 * Draws `m` paths into row-major `m x steps` buffers `v_out` and `b_out`,
 * each of length `len`.
 */
enum VsStatus vs_sampler_sample(const struct VsSampler *sampler,
                                uint64_t seed,
                                size_t m,
                                double *v_out,
                                double *b_out,
                                size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VOLTERRA_SMILE_H */
