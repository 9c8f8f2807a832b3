#include <math.h>
#include <stdio.h>
#include <stdlib.h>

#include "chpca.h"

#define SERIES 8
#define DAYS 200

int main(void) {
    double values[SERIES * DAYS];
    for (int c = 0; c < SERIES; c++) {
        double phase = c < SERIES / 2 ? 0.0 : 0.5;
        for (int t = 0; t < DAYS; t++) {
            double wobble = 0.05 * sin(12.9898 * (c * DAYS + t));
            values[c * DAYS + t] = exp(7.0 + 2.0 * cos(2.0 * M_PI * 16.0 * t / DAYS + phase) + wobble);
        }
    }

    ChpcaOptions opts = chpca_options_default();
    opts.detrend = CHPCA_DETREND_NONE;
    ChpcaSpectrum *spectrum = NULL;
    if (chpca_analyze(values, SERIES, DAYS, &opts, &spectrum) != CHPCA_STATUS_OK) {
        fprintf(stderr, "analyze: %s\n", chpca_last_error_message());
        return 1;
    }
    double eig[SERIES];
    if (chpca_spectrum_eigenvalues(spectrum, eig, SERIES) != CHPCA_STATUS_OK) return 2;
    double re[SERIES], im[SERIES];
    if (chpca_spectrum_eigenvector(spectrum, 1, re, im, SERIES) != CHPCA_STATUS_OK) return 3;
    if (chpca_spectrum_eigenvector(spectrum, 99, re, im, SERIES) != CHPCA_STATUS_INVALID_ARGUMENT) return 4;
    if (chpca_last_error_message() == NULL) return 5;

    double lead = atan2(im[SERIES - 1], re[SERIES - 1]) - atan2(im[0], re[0]);
    printf("lambda1=%.6f significant=%zu lead=%.4f\n", eig[0], chpca_spectrum_significant_count(spectrum), lead);
    chpca_spectrum_free(spectrum);
    return fabs(lead - 0.5) < 0.05 && eig[0] > SERIES - 1 ? 0 : 6;
}
