#include <stdio.h>
#include "uqpe.h"

int main(void) {
    double x[50], y[50];
    for (int i = 0; i < 50; i++) {
        x[i] = i;
        y[i] = 2.0 + x[i];
    }
    UqpeDataset *data = NULL;
    if (uqpe_dataset_new(y, x, NULL, 50, 0, &data) != UQPE_STATUS_OK) {
        fprintf(stderr, "%s\n", uqpe_last_error_message());
        return 1;
    }
    UqpeModel *model = NULL;
    if (uqpe_model_fit(data, 9, 0.9, 0.2, &model) != UQPE_STATUS_OK) {
        fprintf(stderr, "%s\n", uqpe_last_error_message());
        return 1;
    }
    UqpeEstimate est;
    if (uqpe_model_estimate(model, 0.5, UQPE_METHOD_NW, &est) != UQPE_STATUS_OK) {
        return 1;
    }
    UqpeStatus bad = uqpe_model_fit(data, 1, 0.9, 0.2, &model);
    printf("estimate=%.6f grid_m=%zu bad=%d\n", est.estimate, est.grid_m, (int)bad);
    uqpe_model_free(model);
    uqpe_dataset_free(data);
    return est.estimate == 1.0 && bad == UQPE_STATUS_INVALID_INPUT ? 0 : 1;
}
