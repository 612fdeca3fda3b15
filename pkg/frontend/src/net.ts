/** WebSocket wrapper: reconnects, bounded outbound queue while offline. */

export class BridgeConnection {
  private socket: WebSocket | null = null;
  private queue: string[] = [];
  private readonly maxQueue = 16;
  onText: (text: string) => void = () => {};
  onStatus: (connected: boolean) => void = () => {};
  dropped = 0;

  constructor(private url: string) {}

  connect(): void {
    const socket = new WebSocket(this.url);
    this.socket = socket;
    socket.onopen = () => {
      this.onStatus(true);
      for (const text of this.queue.splice(0)) socket.send(text);
    };
    socket.onmessage = (event) => this.onText(String(event.data));
    socket.onclose = () => {
      this.onStatus(false);
      setTimeout(() => this.connect(), 1000);
    };
    socket.onerror = () => socket.close();
  }

  send(text: string): void {
    if (this.socket && this.socket.readyState === WebSocket.OPEN) {
      this.socket.send(text);
      return;
    }
    if (this.queue.length >= this.maxQueue) {
      this.dropped += 1; // bounded queue: drop with a warning counter
      return;
    }
    this.queue.push(text);
  }
}
