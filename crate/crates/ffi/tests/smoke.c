#include <math.h>
#include <stdio.h>
#include <string.h>

#include "epitruss.h"

#define CHECK(c)                                                 \
    do {                                                         \
        if (!(c)) {                                              \
            fprintf(stderr, "%s:%d: %s\n", __FILE__, __LINE__, #c); \
            return 1;                                            \
        }                                                        \
    } while (0)

int main(void) {
    const double x[4] = {1.0, 0.0, 0.0, 0.0};
    const double y[4] = {0.0, 0.0, 0.0, 1.0};
    const double id[4] = {1.0, 0.0, 0.0, 1.0};
    double v = 0.0;

    CHECK(ept_lambda_max(2, x, y, &v) == EPT_STATUS_OK && isinf(v));
    CHECK(ept_lambda_max(2, x, id, &v) == EPT_STATUS_OK && v == 1.0);
    CHECK(ept_lambda_max_eps(2, x, y, 0.5, &v) == EPT_STATUS_OK && fabs(v - 2.0) < 1e-12);
    CHECK(ept_lambda_min(2, id, x, &v) == EPT_STATUS_OK && fabs(v - 1.0) < 1e-9);

    const double neg[1] = {-1.0};
    CHECK(ept_lambda_max(1, neg, id, &v) == EPT_STATUS_NOT_PSD);
    CHECK(ept_last_error() != NULL && strlen(ept_last_error()) > 0);

    const char *cfg =
        "{\"problem\": \"robust_compliance\","
        " \"structure\": {\"explicit\": {\"nodes\": [[0, 0], [2, 0]], \"bars\": [[0, 1]]}},"
        " \"fixed_nodes\": [0], \"fixed_dofs\": [[1, 1]], \"load_node\": 1, \"load_dims\": 1,"
        " \"volume\": 0.5, \"eps\": 1e-6}";
    EptModel *model = NULL;
    CHECK(ept_model_from_json(cfg, &model) == EPT_STATUS_OK);
    CHECK(ept_model_num_vars(model) == 1);
    const double area[1] = {0.25};
    CHECK(ept_model_psi(model, area, 1, &v) == EPT_STATUS_OK && fabs(v - 8.0) < 1e-8);
    ept_model_free(model);

    EptResult *result = NULL;
    CHECK(ept_solve(cfg, EPT_COMMAND_SOLVE, &result) == EPT_STATUS_OK);
    double design[1];
    size_t len = 0;
    CHECK(ept_result_design(result, design, 1, &len) == EPT_STATUS_OK && len == 1);
    CHECK(fabs(design[0] - 0.25) < 1e-12);
    char *json = ept_result_to_json(result);
    CHECK(json != NULL && strstr(json, "\"command\":\"solve\"") != NULL);
    ept_string_free(json);
    ept_result_free(result);

    printf("ok\n");
    return 0;
}
