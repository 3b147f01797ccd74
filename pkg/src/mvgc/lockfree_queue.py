"""Lock-free multi-producer/multi-consumer FIFO of pool handles.

Classic two-pointer queue with helping: a stalled enqueuer's tail swing is
completed by whoever notices it.  The range tracker moves whole pools
(lists of ranges) through this queue; ownership transfers with the handle,
so dequeued pools are processed without further synchronization.
"""

import itertools


class _QNode:
    __slots__ = ("value", "next", "name")

    def __init__(self, value, name):
        self.value = value
        self.next = None
        self.name = name


class PoolQueue:
    __slots__ = ("head", "tail", "_rt", "name", "_nseq")

    def __init__(self, rt, name: str = "Q"):
        self._rt = rt
        self.name = name
        self._nseq = itertools.count(1)
        dummy = _QNode(None, f"{name}.n0")
        self.head = dummy
        self.tail = dummy

    def enqueue(self, value):
        rt = self._rt
        node = _QNode(value, f"{self.name}.n{next(self._nseq)}")
        while True:
            tail = rt.read(self, "tail")
            nxt = rt.read(tail, "next")
            if tail == rt.read(self, "tail"):
                if nxt is None:
                    if rt.cas(tail, "next", None, node):
                        rt.cas(self, "tail", tail, node)
                        return
                else:
                    rt.cas(self, "tail", tail, nxt)

    def dequeue(self):
        """Pop the oldest value, or None when the queue is empty."""
        rt = self._rt
        while True:
            head = rt.read(self, "head")
            tail = rt.read(self, "tail")
            nxt = rt.read(head, "next")
            if head == rt.read(self, "head"):
                if head == tail:
                    if nxt is None:
                        return None
                    rt.cas(self, "tail", tail, nxt)
                else:
                    value = rt.read(nxt, "value")
                    if rt.cas(self, "head", head, nxt):
                        return value

    def snapshot(self):
        """List of queued values, oldest first.  Only valid at quiescence."""
        out = []
        node = self.head.next
        while node is not None:
            out.append(node.value)
            node = node.next
        return out
