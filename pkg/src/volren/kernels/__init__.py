"""Hot-loop kernels in two flavors per module: *_nb (numba) and *_np (numpy).

Modules in this package are selected through
:func:`volren.backend.select_kernels`; the two flavors of each module
implement the same functions with the same array signatures and the
same floating-point expression order, so results agree bit-for-bit
wherever the loop structure is equivalent.
"""
