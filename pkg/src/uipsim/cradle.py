"""Instance registry and host interface for the constrained stack.

Holds up to num_stacks isolated stack instances, activates exactly one at a
time, and routes the activated instance's output back to the caller through
exchangeable netstack driver slots instead of letting the stack transmit
directly. Stub environment functions (clock, random, log) are supplied per
instance.
"""

from contextlib import contextmanager
from dataclasses import dataclass

from .rng import Rng
from .uip import StubTable, UipConfig, UipInstance

OutFrame = bytes


class CradleError(Exception):
    pass


class RegistryFull(CradleError):
    pass


class NestedActivation(CradleError):
    pass


class UnknownStackId(CradleError):
    pass


class DriversUnbound(CradleError):
    pass


class IdentityDriver:
    """Pass-through slot; a seam where alternative drivers can be plugged in."""

    name = "identity"

    def input(self, frame: bytes) -> bytes | None:
        return frame

    def send(self, frame: bytes) -> bytes | None:
        return frame


class CaptureMac(IdentityDriver):
    """MAC slot that redirects stack output back to the simulator."""

    name = "capture-mac"

    def __init__(self):
        self.captured: list[bytes] = []

    def send(self, frame: bytes) -> bytes | None:
        self.captured.append(frame)
        return frame


@dataclass
class NetstackDrivers:
    network: object
    mac: object
    rdc: object
    radio: object
    framer: object

    @classmethod
    def default(cls) -> "NetstackDrivers":
        return cls(
            network=IdentityDriver(),
            mac=CaptureMac(),
            rdc=IdentityDriver(),
            radio=IdentityDriver(),
            framer=IdentityDriver(),
        )

    def validate(self) -> None:
        for slot in ("network", "mac", "rdc", "radio", "framer"):
            if getattr(self, slot) is None:
                raise DriversUnbound(f"driver slot {slot!r} is unbound")


class _InstanceContext:
    def __init__(self, stack_id: int, instance: UipInstance, drivers: NetstackDrivers):
        self.stack_id = stack_id
        self.instance = instance
        self.drivers = drivers


class StackRegistry:
    """Fixed-capacity registry of stack instances with non-nested activation."""

    def __init__(self, num_stacks: int):
        if num_stacks <= 0:
            raise ValueError("num_stacks must be positive")
        self.num_stacks = num_stacks
        self._slots: list[_InstanceContext | None] = [None] * num_stacks
        self._current: int | None = None

    @property
    def current(self) -> int | None:
        return self._current

    def create_instance(self, config: UipConfig | None = None,
                        drivers: NetstackDrivers | None = None, *,
                        addr: str, app=None, log_sink=None) -> int:
        for stack_id, slot in enumerate(self._slots):
            if slot is None:
                break
        else:
            raise RegistryFull(f"all {self.num_stacks} instance slots in use")
        drivers = drivers or NetstackDrivers.default()
        drivers.validate()
        sink = log_sink if log_sink is not None else (lambda line: None)
        instance = UipInstance(addr=addr, config=config, app=app)
        instance.stubs = StubTable(
            clock=instance.now,
            random=Rng(stack_id).next_u64,
            log=sink,
        )
        self._slots[stack_id] = _InstanceContext(stack_id, instance, drivers)
        return stack_id

    def destroy_instance(self, stack_id: int) -> None:
        self._ctx(stack_id)
        if self._current == stack_id:
            raise NestedActivation("cannot destroy the active instance")
        self._slots[stack_id] = None

    def _ctx(self, stack_id: int) -> _InstanceContext:
        if not 0 <= stack_id < self.num_stacks or self._slots[stack_id] is None:
            raise UnknownStackId(f"no instance with id {stack_id}")
        return self._slots[stack_id]

    @contextmanager
    def _activated(self, stack_id: int):
        self._ctx(stack_id)
        if self._current is not None:
            raise NestedActivation(
                f"instance {self._current} is active; cannot activate {stack_id}"
            )
        self._current = stack_id
        try:
            yield self._slots[stack_id]
        finally:
            self._current = None

    def with_instance(self, stack_id: int, action):
        """Run `action(instance)` with the instance activated."""
        with self._activated(stack_id) as ctx:
            return action(ctx.instance)

    def inject_frame(self, stack_id: int, frame: bytes, now: int) -> list[OutFrame]:
        """Deliver one frame through the driver chain into the stack."""
        with self._activated(stack_id) as ctx:
            instance = ctx.instance
            instance.set_now(now)
            if len(frame) > instance.config.packetbuf_size:
                instance.counters["drop_packetbuf"] += 1
                return []
            for slot in (ctx.drivers.radio, ctx.drivers.rdc, ctx.drivers.framer,
                         ctx.drivers.network):
                frame = slot.input(frame)
                if frame is None:
                    instance.counters["drop_driver"] += 1
                    return []
            outputs = instance.input(frame)
            return self._outbound(ctx, outputs)

    def tick(self, stack_id: int, now: int) -> list[OutFrame]:
        """Run the instance's periodic timer processing."""
        with self._activated(stack_id) as ctx:
            ctx.instance.set_now(now)
            return self._outbound(ctx, ctx.instance.periodic())

    def poll(self, stack_id: int, conn=None, now: int | None = None) -> list[OutFrame]:
        with self._activated(stack_id) as ctx:
            if now is not None:
                ctx.instance.set_now(now)
            return self._outbound(ctx, ctx.instance.poll(conn))

    def counters(self, stack_id: int) -> dict:
        return dict(self._ctx(stack_id).instance.counters)

    def instance(self, stack_id: int) -> UipInstance:
        """Direct instance access for wiring; stack entry points still must go
        through activation."""
        return self._ctx(stack_id).instance

    def _outbound(self, ctx: _InstanceContext, packets: list[bytes]) -> list[OutFrame]:
        frames: list[OutFrame] = []
        for packet in packets:
            frame = ctx.drivers.mac.send(packet)
            if frame is not None:
                frames.append(frame)
        return frames
