"""
A coordinator session over TCP
==============================

The coordinator collects one index set per machine and answers with the
aggregate once all k have arrived. Here the server runs in a background
thread and each machine is its own process.
"""

import multiprocessing as mp

from adages import Client, CoordinatorServer


def machine(addr, session, machine_id, selected):
    with Client(addr) as c:
        reply = c.report(session, machine_id, d=8, selected=selected)
        if reply["type"] != "result":
            reply = c.wait_result(session)
    print(f"machine {machine_id} sees {reply['selected']} (threshold {reply['threshold_used']})")


if __name__ == "__main__":
    server = CoordinatorServer(("127.0.0.1", 0))
    server.start()

    with Client(server.address) as admin:
        session = admin.open(k=3, d=8, rule="adages")["session"]
        print("opened session", session)

        reports = [[0, 1, 2, 5], [0, 1, 2, 6], [0, 1, 3]]
        procs = [mp.Process(target=machine, args=(server.address, session, i, s))
                 for i, s in enumerate(reports)]
        for p in procs:
            p.start()
        for p in procs:
            p.join()

        # a second, different report from machine 0 is refused
        print(admin.report(session, 0, 8, [7]))
        # resending the original report is harmless
        print(admin.report(session, 0, 8, [0, 1, 2, 5])["status"])

    server.shutdown()
    server.server_close()
