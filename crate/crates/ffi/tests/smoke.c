#include <stdio.h>
#include <string.h>

#include "egolog.h"

int main(void) {
    if (strlen(egolog_version()) == 0) return 1;

    EgologSession *s = NULL;
    if (egolog_session_new(NULL, NULL, &s) != EGOLOG_STATUS_NULL_ARGUMENT) return 2;
    if (s != NULL || egolog_last_error() == NULL) return 3;

    static float left[4800], right[4800];
    unsigned int x = 12345u;
    for (int i = 0; i < 4800; i++) {
        x = x * 1103515245u + 12345u;
        left[i] = (float)((x >> 16) & 0x7fff) / 32768.0f - 0.5f;
        right[i] = i >= 3 ? left[i - 3] : 0.0f;
    }
    double tau = 0.0;
    if (egolog_estimate_tdoa(left, right, 4800, 48000, &tau) != EGOLOG_STATUS_OK) {
        fprintf(stderr, "%s\n", egolog_last_error());
        return 4;
    }
    printf("%.3f\n", tau * 48000.0);

    if (egolog_metrics_len(NULL) != 0) return 5;
    egolog_session_free(NULL);
    egolog_metrics_free(NULL);
    return 0;
}
