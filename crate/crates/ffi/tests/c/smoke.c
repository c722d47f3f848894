#include <math.h>
#include <stdio.h>
#include <string.h>

#include "fastslow.h"

#define CHECK(cond)                                                    \
    do {                                                               \
        if (!(cond)) {                                                 \
            fprintf(stderr, "%s:%d: check failed: %s\n", __FILE__,     \
                    __LINE__, #cond);                                  \
            return 1;                                                  \
        }                                                              \
    } while (0)

int main(void) {
    FsFastMap *map = NULL;
    CHECK(fs_fast_map_new(FS_MAP_MODIFIED_POMEAU_MANNEVILLE, 0.1, &map) == FS_STATUS_OK);
    double y = 0.0;
    CHECK(fs_fast_map_step(map, 0.75, &y) == FS_STATUS_OK);
    CHECK(y == -0.5);

    char msg[256];
    CHECK(fs_fast_map_step(map, 2.0, &y) == FS_STATUS_DOMAIN);
    CHECK(fs_last_error_message(msg, sizeof msg) > 0);
    CHECK(strstr(msg, "2") != NULL);

    FsFastMap *bad = NULL;
    CHECK(fs_fast_map_new(7, 0.1, &bad) == FS_STATUS_INVALID_ARGUMENT);
    CHECK(bad == NULL);

    FsCovariance cov;
    CHECK(fs_green_kubo_identity(map, 0.3, 1000000, 10000, 200, &cov) == FS_STATUS_OK);
    CHECK(fabs(cov.f0_second_moment - 0.319) < 0.01);
    CHECK(cov.negative_variance == 0);

    FsCirParams p = {0.085, 0.16, 0.383, 1.0};
    CHECK(fabs(fs_cir_mean(p, 10.0) - 0.5076) < 1e-4);

    FsEnsemble *e = NULL;
    CHECK(fs_cir_ensemble_new(p, 20000, 1, 2, 10.0, &e) == FS_STATUS_OK);
    CHECK(fs_ensemble_len(e) == 20000);
    double ks = 1.0;
    CHECK(fs_ensemble_ks_cir(e, p, 10.0, &ks) == FS_STATUS_OK);
    CHECK(ks < 0.02);
    fs_ensemble_free(e);

    double a[3] = {0.0, 0.0, 0.0};
    double b[1] = {1.0};
    CHECK(fs_ks_two_sample(a, 3, b, 1, &ks) == FS_STATUS_OK && ks == 1.0);
    CHECK(fs_ks_two_sample(NULL, 3, b, 1, &ks) == FS_STATUS_NULL_POINTER);

    double s[4];
    CHECK(fs_stable_sample(0.75, 1.0, 1.0, 0, 0, s, 4) == FS_STATUS_OK);
    CHECK(fs_stable_sample(1.25, 1.0, 1.0, 0, 0, s, 4) == FS_STATUS_INVALID_ARGUMENT);

    fs_fast_map_free(map);
    fs_fast_map_free(NULL);
    printf("ok %s\n", fs_version());
    return 0;
}
