#include <math.h>
#include <stdio.h>
#include "qbell.h"

int main(void) {
    QbellOperator *op = NULL;
    if (qbell_operator_new(3, &op) != QBELL_STATUS_OK) return 1;
    double ev[9];
    if (qbell_operator_eigenvalues(op, ev, 9) != QBELL_STATUS_OK) return 2;
    QbellState *psi = NULL;
    if (qbell_state_max_entangled(3, &psi) != QBELL_STATUS_OK) return 3;
    double s = 0.0;
    if (qbell_bell_value(op, psi, &s) != QBELL_STATUS_OK) return 4;
    QbellOperator *bad = NULL;
    if (qbell_operator_new(1, &bad) != QBELL_STATUS_INVALID_ARGUMENT) return 5;
    char msg[256];
    if (qbell_last_error_message(msg, sizeof msg) == 0) return 6;
    printf("%.4f %.4f\n", ev[0], s);
    qbell_state_free(psi);
    qbell_operator_free(op);
    return 0;
}
