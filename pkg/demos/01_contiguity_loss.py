"""How the contiguity loss scores attention matrices.

Run: python demos/01_contiguity_loss.py

The loss slides a window of two source positions over each pair of
neighbouring target columns and rewards matrices in which some window
catches most of the mass. Monotone and blocky matrices reach the minimum
value log 2 (only the last column, whose window runs into the zero padding, costs
anything); scattered attention pays more.
"""

import numpy as np

from attnalign import tensor as T
from attnalign.objectives import ContiguityConfig, contiguity_loss


def show(title, A):
    with T.precision(np.float64):
        value = float(contiguity_loss(A).data)
    print(f"{title:<28} L_C = {value:6.3f}   (log 2 = {np.log(2):.3f})")


print("== hand-built matrices (rows: source words, columns: target words)")
show("diagonal 4x4", np.eye(4))
show("reversed diagonal 4x4", np.eye(4)[::-1])
stair = np.zeros((3, 4))
stair[[0, 0, 1, 2], [0, 1, 2, 3]] = 1
show("staircase 3x4", stair)
scattered = np.zeros((5, 4))
scattered[[0, 4, 1, 3], [0, 1, 2, 3]] = 1
show("scattered 5x4", scattered)
show("uniform 4x4", np.full((4, 4), 0.25))

print("\n== the gradient favours the neighbour of the previous column's peak")
# column 1 peaks on source 1; column 2 is torn between source 2 (adjacent) and source 4
logits = np.array([[4.0, 0.0], [0.0, 2.0], [0.0, 0.0], [0.0, 2.0]])
with T.precision(np.float64):
    x = T.Tensor(logits, requires_grad=True)
    T.backward(contiguity_loss(T.softmax(x, axis=0), ContiguityConfig()))
print("logits:\n", logits)
print("descent direction (negative gradient):\n", np.round(-x.grad, 3))
print("Column 2 gains on source 2 and loses on source 4.")
