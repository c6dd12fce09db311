#include <math.h>
#include <stdio.h>
#include "nlabp.h"

#define CHECK(call)                                              \
    do {                                                         \
        int32_t rc_ = (call);                                    \
        if (rc_ != NLABP_OK) {                                   \
            char msg_[256];                                      \
            nlabp_last_error(msg_, sizeof msg_);                 \
            fprintf(stderr, "%s -> %d: %s\n", #call, rc_, msg_); \
            return 1;                                            \
        }                                                        \
    } while (0)

int main(void) {
    NlabpParams *params = NULL;
    NlabpGrid *grid = NULL;
    NlabpPlan *plan = NULL;
    NlabpField *u = NULL;
    double h, x[2], value, values[33 * 33];
    size_t len, i;

    if (nlabp_params_new(2, 2.5, 1.0, 2.0, &params) != NLABP_ERR_DOMAIN) return 2;
    CHECK(nlabp_params_new(2, 1.0, 1.0, 2.0, &params));
    CHECK(nlabp_grid_cube(2, 3.2, 33, &grid));
    CHECK(nlabp_grid_spacing(grid, &h));
    CHECK(nlabp_plan_new(2, h, 6.0, &plan));
    CHECK(nlabp_grid_len(grid, &len));
    for (i = 0; i < len; i++) {
        double r2;
        CHECK(nlabp_grid_point(grid, i, x));
        r2 = x[0] * x[0] + x[1] * x[1];
        values[i] = r2 < 1.0 ? -(1.0 - r2) * (1.0 - r2) : 0.0;
    }
    CHECK(nlabp_field_new(grid, values, len, &u));
    x[0] = 0.0;
    x[1] = 0.0;
    CHECK(nlabp_operator(NLABP_OPERATOR_FRAC_LAPLACIAN, u, x, params, plan, &value));
    printf("frac_laplacian %.6f\n", value);
    if (!(value > 0.0) || !isfinite(value)) return 3;

    nlabp_field_free(u);
    nlabp_plan_free(plan);
    nlabp_grid_free(grid);
    nlabp_params_free(params);
    return 0;
}
