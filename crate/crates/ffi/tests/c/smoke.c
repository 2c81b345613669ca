#include <stdio.h>
#include <string.h>

#include "storebid.h"

#define CHECK(call)                                                          \
    do {                                                                     \
        enum SbStatus s_ = (call);                                           \
        if (s_ != SB_OK) {                                                   \
            fprintf(stderr, "%s -> %d: %s\n", #call, (int)s_,                \
                    sb_last_error_message());                                \
            return 1;                                                        \
        }                                                                    \
    } while (0)

int main(void) {
    SbInstance *inst = NULL;
    SbTable *exact = NULL;
    SbTable *trained = NULL;
    double v0 = 0.0, mean = 0.0, se = 0.0, revenue = 0.0;
    uint32_t r1 = 0, l1 = 0;
    double prices[1] = {90.0};

    CHECK(sb_instance_from_json("{\"preset\": \"desk\"}", &inst));
    CHECK(sb_solve_exact(inst, &exact, &v0));
    CHECK(sb_train_pre(inst, "{\"iterations\": 2000, \"seed\": 1}", &trained));
    CHECK(sb_evaluate_policy(inst, trained, 200, 3, &mean, &se));
    CHECK(sb_hourly_revenue(inst, 2, 3, prices, 1, 0.0, 50.0, &revenue, &r1, &l1));
    if (sb_instance_from_json("{\"preset\": 7}", &inst) != SB_CONFIG ||
        strlen(sb_last_error_message()) == 0) {
        fprintf(stderr, "expected a configuration error\n");
        return 1;
    }
    printf("version %s v0 %.6f mean %.6f revenue %.1f r %u l %u\n", sb_version(), v0, mean, revenue, r1, l1);
    sb_table_free(trained);
    sb_table_free(exact);
    sb_instance_free(inst);
    return (revenue == 90.0 && r1 == 1 && l1 == 2 && v0 > 0.0) ? 0 : 1;
}
