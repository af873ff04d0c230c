"""Central finite-difference gradient verification for tiny float64 models."""

from __future__ import annotations

import torch


def finite_difference_check(
    named_params: list[tuple[str, torch.nn.Parameter]],
    loss_fn,
    h: float = 1e-5,
    rtol: float = 1e-4,
    atol: float = 1e-7,
    max_elements_per_tensor: int | None = None,
    seed: int = 0,
) -> list[str]:
    """Compare autograd gradients of loss_fn() against central differences.

    Returns a list of human-readable failure strings (empty = all good).
    Checks every element of every tensor unless max_elements_per_tensor caps
    it, in which case a seeded random subset per tensor is used.
    """
    params = [p for _, p in named_params]
    for p in params:
        if p.dtype != torch.float64:
            raise ValueError("finite differences need a float64 model")
        p.grad = None
    loss = loss_fn()
    loss.backward()
    analytic = {name: (p.grad.detach().clone() if p.grad is not None else None)
                for name, p in named_params}

    rng = torch.Generator().manual_seed(seed)
    failures = []
    with torch.no_grad():
        for name, p in named_params:
            grad = analytic[name]
            flat = p.view(-1)
            n = flat.numel()
            if max_elements_per_tensor is not None and n > max_elements_per_tensor:
                idx = torch.randperm(n, generator=rng)[:max_elements_per_tensor]
            else:
                idx = torch.arange(n)
            for i in idx.tolist():
                orig = flat[i].item()
                flat[i] = orig + h
                up = loss_fn().item()
                flat[i] = orig - h
                down = loss_fn().item()
                flat[i] = orig
                fd = (up - down) / (2 * h)
                a = 0.0 if grad is None else grad.view(-1)[i].item()
                if abs(a - fd) > rtol * max(abs(a), abs(fd)) + atol:
                    failures.append(
                        f"{name}[{i}]: analytic={a:.6e} fd={fd:.6e} diff={abs(a - fd):.2e}"
                    )
    return failures
