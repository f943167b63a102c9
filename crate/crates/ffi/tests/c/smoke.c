#include <stdio.h>
#include <math.h>
#include "kgm.h"

/* AR(1) with a coupling between channels 0 and 1 only. */
int main(void)
{
  enum { N = 3000, M = 4 };
  static double y[N * M];
  unsigned long s = 12345;
  double prev[M] = {0};
  for (int t = 0; t < N; t++) {
    for (int c = 0; c < M; c++) {
      s = s * 6364136223846793005UL + 1442695040888963407UL;
      double e = ((double)(s >> 11) / 9007199254740992.0) - 0.5;
      double v = 0.5 * prev[c] + e;
      if (c == 1)
        v += 0.3 * prev[0];
      y[t * M + c] = v;
    }
    for (int c = 0; c < M; c++)
      prev[c] = y[t * M + c];
  }

  KgmLags *lags = NULL;
  if (kgm_lags_from_series(y, N, M, 1, &lags) != KGM_STATUS_OK)
    return 1;
  KgmResult *res = NULL;
  KgmEstimateOptions opts = kgm_estimate_options_default();
  if (kgm_estimate(lags, KGM_METHOD_K1, 2, 2, &opts, &res) != KGM_STATUS_OK) {
    fprintf(stderr, "%s\n", kgm_last_error_message());
    return 2;
  }
  double coeffs[2 * M * M];
  if (kgm_result_coefficients(res, coeffs, 2 * M * M) != KGM_STATUS_OK)
    return 3;
  if (kgm_result_coefficients(res, coeffs, 3) != KGM_STATUS_BUFFER_TOO_SMALL)
    return 4;
  double curve[64];
  if (kgm_edge_residual_spectrum(res, KGM_GROUPING_MODULES, 0, 1, 64, curve, 64) != KGM_STATUS_OK)
    return 5;
  if (kgm_estimate(NULL, KGM_METHOD_K1, 2, 2, NULL, &res) != KGM_STATUS_NULL_POINTER)
    return 6;
  printf("dim %zu order %zu defect %g s00 %g\n", kgm_result_dim(res), kgm_result_order(res),
         kgm_result_defect(res), coeffs[0]);
  kgm_result_free(res);
  kgm_lags_free(lags);
  return isfinite(coeffs[0]) ? 0 : 7;
}
