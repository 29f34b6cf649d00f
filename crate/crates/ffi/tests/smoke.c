#include <math.h>
#include <stdio.h>
#include <string.h>

#include "sgbseg.h"

int main(int argc, char **argv) {
    if (argc != 2) {
        fprintf(stderr, "usage: smoke <model-dir>\n");
        return 2;
    }
    SgbModel *model = NULL;
    if (sgb_model_load(argv[1], &model) != SGB_STATUS_OK) {
        fprintf(stderr, "load: %s\n", sgb_last_error_message());
        return 1;
    }
    char *out = NULL;
    if (sgb_segment(model, "我从小学唱歌", SGB_DECODER_SGB_C, &out) != SGB_STATUS_OK) {
        fprintf(stderr, "segment: %s\n", sgb_last_error_message());
        return 1;
    }
    printf("%s\n", out);
    sgb_string_free(out);
    sgb_model_free(model);

    if (sgb_model_load("/no/such/model", &model) != SGB_STATUS_IO || model != NULL) {
        return 1;
    }

    double zeros[4 * 2] = {0};
    double z = 0.0;
    if (sgb_log_marginal(zeros, 4, 2, &z) != SGB_STATUS_OK || fabs(exp(z) - 5.0) > 1e-9) {
        return 1;
    }
    size_t ends[4];
    size_t count = 0;
    if (sgb_viterbi(zeros, 4, 2, ends, 4, &count, NULL) != SGB_STATUS_OK || ends[count - 1] != 4) {
        return 1;
    }
    printf("ok %s\n", sgb_version());
    return 0;
}
